//! Time stepping for the linear, potential-perturbed and nonlinear KdV
//! systems and their adjoints.
//!
//! Every interval `k` is a theta step `(I + a E) x_new = (I - b E) x_old +
//! dt S_k` with Crank-Nicolson weights `a = b = dt/2`, except that the first
//! and last intervals of a fresh mesh use implicit Euler (`a = dt`, `b = 0`)
//! to damp grid-scale content of incompatible data.  The pattern is a
//! palindrome, so the backward adjoint march is the exact transpose of the
//! forward one and is conjugate to it under `(t, x) -> (T - t, L - x)`.

use crate::band::{Band, BandLu};
use crate::error::{check_len, KdvError, Result};
use crate::mesh::{BcTag, DiscreteOperator, Mesh, PotentialSlice};
use crate::weights::{self, hminus1_norm, l2_norm, time_trapezoid, vnorm, wnorm, WeightKind};

/// Potential `xi` of the transport term `(xi u)_x`.
#[derive(Clone, Debug)]
pub enum Potential {
    Zero,
    Const(f64),
    /// `xi = base + values[j]` at time level `j`.
    Field { base: f64, values: Vec<Vec<f64>> },
}

impl Potential {
    pub fn slice(&self, mesh: &Mesh, k: usize) -> PotentialSlice {
        match self {
            Potential::Zero => PotentialSlice::Const(0.0),
            Potential::Const(c) => PotentialSlice::Const(*c),
            Potential::Field { base, values } => {
                let mut v = mesh.theta_mix(k, &values[k], &values[k + 1]);
                v.iter_mut().for_each(|x| *x += base);
                PotentialSlice::Field(v)
            }
        }
    }

    fn is_constant(&self) -> bool {
        !matches!(self, Potential::Field { .. })
    }

    /// Size of the variable part: discrete `L^2 H^1 + L^inf L^2`.
    pub fn surrogate_norm(&self, mesh: &Mesh) -> f64 {
        match self {
            Potential::Field { values, .. } => {
                let h1: Vec<f64> = values
                    .iter()
                    .map(|v| l2_norm(v, mesh.h).powi(2) + vnorm(v, mesh, weights::VNormKind::H10).powi(2))
                    .collect();
                let linf = values.iter().map(|v| l2_norm(v, mesh.h)).fold(0.0, f64::max);
                time_trapezoid(&h1, mesh.dt).sqrt() + linf
            }
            _ => 0.0,
        }
    }
}

/// Degree-7 smoothstep profile: 0 left of `L - nu`, 1 right of `L - nu/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rho {
    pub l: f64,
    pub nu: f64,
}

pub(crate) fn smoothstep7(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        let s4 = s.powi(4);
        let p = s4 * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s);
        let dp = 140.0 * s.powi(3) * (1.0 - s).powi(3);
        (p, dp)
    }
}

impl Rho {
    pub fn new(l: f64, nu: f64) -> Result<Rho> {
        if !(nu > 0.0 && nu < l) {
            return Err(KdvError::Invalid(format!("nu must lie in (0, L), got {nu}")));
        }
        Ok(Rho { l, nu })
    }

    /// `(rho(x), rho'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let w = 0.5 * self.nu;
        let (p, dp) = smoothstep7((x - (self.l - self.nu)) / w);
        (p, dp / w)
    }

    /// `f = (rho h)_x = rho' h + rho D1 h`.
    pub fn apply(&self, h: &[f64], mesh: &Mesh) -> Vec<f64> {
        let hx = weights::first_diff(h, mesh.h);
        (0..h.len())
            .map(|i| {
                let (r, dr) = self.eval(mesh.x(i + 1));
                dr * h[i] + r * hx[i]
            })
            .collect()
    }

    /// Transpose of `apply` in the nodal `l2` pairing: `rho' v - D1 (rho v)`,
    /// a discretization of `-rho v_x`.
    pub fn apply_t(&self, v: &[f64], mesh: &Mesh) -> Vec<f64> {
        let rv: Vec<f64> = (0..v.len()).map(|i| self.eval(mesh.x(i + 1)).0 * v[i]).collect();
        let d = weights::first_diff(&rv, mesh.h);
        (0..v.len()).map(|i| self.eval(mesh.x(i + 1)).1 * v[i] - d[i]).collect()
    }
}

/// Right-hand side, stored per time interval (`m` entries).
#[derive(Clone, Debug)]
pub enum Forcing {
    Zero,
    Distributed(Vec<Vec<f64>>),
    Weighted { rho: Rho, h: Vec<Vec<f64>> },
    /// Neumann data `u_x(l2p) = g_k` of a `SubdomainForward` operator.
    Boundary(Vec<f64>),
}

impl Forcing {
    fn check(&self, mesh: &Mesh) -> Result<()> {
        let rows = match self {
            Forcing::Zero => return Ok(()),
            Forcing::Distributed(f) => f,
            Forcing::Weighted { h, .. } => h,
            Forcing::Boundary(g) => {
                return if g.len() == mesh.m { Ok(()) } else { Err(KdvError::Dimension { expected: mesh.m, got: g.len() }) }
            }
        };
        if rows.len() != mesh.m {
            return Err(KdvError::Dimension { expected: mesh.m, got: rows.len() });
        }
        rows.iter().try_for_each(|r| check_len(r, mesh.n))
    }

    /// Source of interval `k` in the nodal equations, or `None` if zero.
    pub fn source(&self, k: usize, mesh: &Mesh, op: &DiscreteOperator) -> Option<Vec<f64>> {
        match self {
            Forcing::Zero => None,
            Forcing::Distributed(f) => Some(f[k].clone()),
            Forcing::Weighted { rho, h } => Some(rho.apply(&h[k], mesh)),
            Forcing::Boundary(g) => {
                let mut s = vec![0.0; mesh.n];
                s[mesh.n - 1] = op.control_weight() * g[k];
                Some(s)
            }
        }
    }

    /// All interval sources as a dense array.
    pub fn to_distributed(&self, mesh: &Mesh, op: &DiscreteOperator) -> Vec<Vec<f64>> {
        (0..mesh.m).map(|k| self.source(k, mesh, op).unwrap_or_else(|| vec![0.0; mesh.n])).collect()
    }

    /// Discrete `int int |f|^2` of the control itself (`h` for the weighted
    /// and boundary variants).
    pub fn cost(&self, mesh: &Mesh) -> f64 {
        let sq = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>() * mesh.h;
        match self {
            Forcing::Zero => 0.0,
            Forcing::Distributed(f) | Forcing::Weighted { h: f, .. } => f.iter().map(sq).sum::<f64>() * mesh.dt,
            Forcing::Boundary(g) => g.iter().map(|x| x * x).sum::<f64>() * mesh.dt,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub bc: BcTag,
    pub values: Vec<Vec<f64>>,
    pub left_trace: Vec<f64>,
    pub right_trace: Vec<f64>,
}

impl Trajectory {
    pub fn new(mesh: Mesh, op: &DiscreteOperator, values: Vec<Vec<f64>>) -> Trajectory {
        let left_trace = values.iter().map(|u| op.trace_left(u)).collect();
        let right_trace = values.iter().map(|u| op.trace_right(u)).collect();
        Trajectory { mesh, bc: op.bc, values, left_trace, right_trace }
    }

    pub fn terminal(&self) -> &[f64] {
        &self.values[self.mesh.m]
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    /// Discrete `||u||_{L^2(0,T;L^2)}`.
    pub fn l2l2(&self) -> f64 {
        let h = self.mesh.h;
        let v: Vec<f64> = self.values.iter().map(|u| l2_norm(u, h).powi(2)).collect();
        time_trapezoid(&v, self.mesh.dt).sqrt()
    }

    /// Discrete `||u||_{L^2(0,T;H^1)}`.
    pub fn l2h1(&self) -> f64 {
        let v: Vec<f64> = self
            .values
            .iter()
            .map(|u| l2_norm(u, self.mesh.h).powi(2) + vnorm(u, &self.mesh, weights::VNormKind::H10).powi(2))
            .collect();
        time_trapezoid(&v, self.mesh.dt).sqrt()
    }

    pub fn linf_l2(&self) -> f64 {
        self.values.iter().map(|u| l2_norm(u, self.mesh.h)).fold(0.0, f64::max)
    }

    pub fn left_trace_l2(&self) -> f64 {
        let v: Vec<f64> = self.left_trace.iter().map(|x| x * x).collect();
        time_trapezoid(&v, self.mesh.dt).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|u| u.iter().all(|x| *x == 0.0))
    }
}

/// Factorized `(I + a E)` and the explicit `(I - b E)` of one interval.
struct StepMats {
    lhs: BandLu,
    rhs: Option<Band>,
}

impl StepMats {
    fn new(e: &Band, a: f64, b: f64) -> Result<StepMats> {
        let lhs = e.scaled(a).shift(1.0).lu()?;
        let rhs = (b != 0.0).then(|| e.scaled(-b).shift(1.0));
        Ok(StepMats { lhs, rhs })
    }

    fn advance(&self, old: &[f64], src: Option<&[f64]>, dt: f64) -> Vec<f64> {
        let mut r = match &self.rhs {
            Some(m) => m.matvec(old),
            None => old.to_vec(),
        };
        if let Some(s) = src {
            r.iter_mut().zip(s).for_each(|(x, y)| *x += dt * y);
        }
        self.lhs.solve_in_place(&mut r);
        r
    }
}

/// Interval operators for a fixed `(mesh, operator, potential)`, cached when
/// the potential is constant in time.
struct Stepper<'a> {
    mesh: &'a Mesh,
    op: &'a DiscreteOperator,
    xi: &'a Potential,
    sign: f64,
    cache: Vec<(f64, StepMats)>,
}

impl<'a> Stepper<'a> {
    /// `sign = 1` for the forward march of `u_t + D u = F`; the adjoint
    /// march uses `E = -D_A` with `sign = -1`.
    fn new(mesh: &'a Mesh, op: &'a DiscreteOperator, xi: &'a Potential, sign: f64) -> Self {
        Stepper { mesh, op, xi, sign, cache: Vec::new() }
    }

    fn mats(&mut self, k: usize) -> Result<StepMats> {
        let (a, b) = self.mesh.theta(k);
        let e = self.op.with_potential(&self.xi.slice(self.mesh, k)).scaled(self.sign);
        StepMats::new(&e, a, b)
    }

    fn with_mats<R>(&mut self, k: usize, f: impl FnOnce(&StepMats) -> R) -> Result<R> {
        if self.xi.is_constant() {
            let (a, _) = self.mesh.theta(k);
            if let Some((_, m)) = self.cache.iter().find(|(ca, _)| *ca == a) {
                return Ok(f(m));
            }
            let m = self.mats(k)?;
            let r = f(&m);
            self.cache.push((a, m));
            Ok(r)
        } else {
            let m = self.mats(k)?;
            Ok(f(&m))
        }
    }
}

fn check_finite(u: &[f64], step: usize) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(KdvError::NonFinite { step })
    }
}

/// One Crank-Nicolson step of `u_t + D u = f` with `D` the operator's
/// `d^3 + d/dx`.
pub fn step_linear(op: &DiscreteOperator, state: &[f64], f_half: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_len(state, op.n)?;
    check_len(f_half, op.n)?;
    let e = op.d3.combine(1.0, &op.d1, 1.0);
    Ok(StepMats::new(&e, 0.5 * dt, 0.5 * dt)?.advance(state, Some(f_half), dt))
}

pub fn solve_forward(
    mesh: &Mesh,
    op: &DiscreteOperator,
    u0: &[f64],
    forcing: &Forcing,
    xi: &Potential,
) -> Result<Trajectory> {
    check_len(u0, mesh.n)?;
    forcing.check(mesh)?;
    let mut st = Stepper::new(mesh, op, xi, 1.0);
    let mut values = Vec::with_capacity(mesh.m + 1);
    values.push(u0.to_vec());
    for k in 0..mesh.m {
        let src = forcing.source(k, mesh, op);
        let next = st.with_mats(k, |s| s.advance(&values[k], src.as_deref(), mesh.dt))?;
        check_finite(&next, k + 1)?;
        values.push(next);
    }
    Ok(Trajectory::new(mesh.clone(), op, values))
}

/// Backward march of `-v_t - xi v_x - v_xxx = f` from `v(T) = vT`.  `op` is
/// the forward operator of the state equation; the adjoint boundary
/// conditions come from its transpose.  Also returns the interval
/// observations `(I + a D^T)^{-1} v^{k+1}`, which pair exactly with forward
/// interval sources.
pub fn solve_adjoint_with_obs(
    mesh: &Mesh,
    op: &DiscreteOperator,
    vt: &[f64],
    xi: &Potential,
    forcing: &Forcing,
) -> Result<(Trajectory, Vec<Vec<f64>>)> {
    check_len(vt, mesh.n)?;
    forcing.check(mesh)?;
    let adj = if op.is_adjoint() { op.clone() } else { op.adjoint() };
    let mut st = Stepper::new(mesh, &adj, xi, -1.0);
    let mut rev = Vec::with_capacity(mesh.m + 1);
    let mut obs = vec![Vec::new(); mesh.m];
    rev.push(vt.to_vec());
    for k in (0..mesh.m).rev() {
        let hi = rev.last().expect("nonempty").clone();
        let src = forcing.source(k, mesh, &adj);
        let lo = st.with_mats(k, |s| s.advance(&hi, src.as_deref(), mesh.dt))?;
        check_finite(&lo, k)?;
        obs[k] = match &src {
            None => mesh.theta_mix(k, &hi, &lo),
            Some(_) => st.with_mats(k, |s| s.lhs.solve(&hi))?,
        };
        rev.push(lo);
    }
    rev.reverse();
    Ok((Trajectory::new(mesh.clone(), &adj, rev), obs))
}

pub fn solve_adjoint(
    mesh: &Mesh,
    op: &DiscreteOperator,
    vt: &[f64],
    xi: &Potential,
    forcing: &Forcing,
) -> Result<Trajectory> {
    solve_adjoint_with_obs(mesh, op, vt, xi, forcing).map(|r| r.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig { tol: 1e-10, max_iter: 25 }
    }
}

#[derive(Clone, Debug)]
pub struct NonlinearRun {
    pub trajectory: Trajectory,
    pub max_inner: usize,
    pub inner_total: usize,
}

/// `u_t + u_x + u u_x + u_xxx = F`.  On interval `k` the scheme is
/// `(u^{k+1} - u^k)/dt + D u_th + D1 (u_th^2 / 2) = F_k` with
/// `u_th = (a u^{k+1} + b u^k)/dt`, solved by Picard iteration on the frozen
/// coefficient `xi = 1 + u_th/2`.
pub fn solve_nonlinear(
    mesh: &Mesh,
    op: &DiscreteOperator,
    u0: &[f64],
    forcing: &Forcing,
    inner: InnerConfig,
) -> Result<NonlinearRun> {
    check_len(u0, mesh.n)?;
    forcing.check(mesh)?;
    let mut values = Vec::with_capacity(mesh.m + 1);
    values.push(u0.to_vec());
    let (mut max_inner, mut total) = (0, 0);
    for k in 0..mesh.m {
        let src = forcing.source(k, mesh, op);
        let (a, b) = mesh.theta(k);
        let old = &values[k];
        let mut cur = old.clone();
        let mut done = false;
        let mut inc = f64::INFINITY;
        for it in 1..=inner.max_iter {
            let mut xi = mesh.theta_mix(k, old, &cur);
            xi.iter_mut().for_each(|v| *v = 1.0 + 0.5 * *v);
            let e = op.with_potential(&PotentialSlice::Field(xi));
            let next = StepMats::new(&e, a, b)?.advance(old, src.as_deref(), mesh.dt);
            check_finite(&next, k + 1)?;
            inc = next.iter().zip(&cur).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            cur = next;
            if inc < inner.tol {
                max_inner = max_inner.max(it);
                total += it;
                done = true;
                break;
            }
        }
        if !done {
            return Err(KdvError::InnerPicard { step: k, increment: inc });
        }
        values.push(cur);
    }
    Ok(NonlinearRun { trajectory: Trajectory::new(mesh.clone(), op, values), max_inner, inner_total: total })
}

/// Interval residual `(U^{k+1} - U^k)/dt + D U_th + D1 (U_th^2/2)` of a
/// given space-time field under the nonlinear scheme; zero (to solver
/// tolerance) for a solution with zero forcing.
pub fn nonlinear_residual(mesh: &Mesh, op: &DiscreteOperator, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..mesh.m)
        .map(|k| {
            let th = mesh.theta_mix(k, &values[k], &values[k + 1]);
            let d = op.apply(&th);
            let sq: Vec<f64> = th.iter().map(|x| 0.5 * x * x).collect();
            let q = op.d1.matvec(&sq);
            (0..mesh.n).map(|i| (values[k + 1][i] - values[k][i]) / mesh.dt + d[i] + q[i]).collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissipationReport {
    /// Largest `(||u^{j+1}|| - ||u^j||) / ||u^j||`.
    pub max_growth: f64,
    /// Range of per-step `decrement / (dt/2 * trace^2)` over Crank-Nicolson
    /// steps whose trace is at least 10% of the largest trace.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub steps_checked: usize,
    /// Same ratio summed over all Crank-Nicolson steps.
    pub cumulative_ratio: f64,
}

/// Checks the energy identity `d/dt ||u||^2/2 = -u_x(t,0)^2/2` of a free
/// linear run, with the trace averaged over each interval.
pub fn dissipation_report(traj: &Trajectory) -> DissipationReport {
    let mesh = &traj.mesh;
    let mut r = DissipationReport {
        max_growth: f64::NEG_INFINITY,
        ratio_min: f64::INFINITY,
        ratio_max: 0.0,
        steps_checked: 0,
        cumulative_ratio: 0.0,
    };
    let norms: Vec<f64> = traj.values.iter().map(|u| l2_norm(u, mesh.h)).collect();
    let tr: Vec<f64> = (0..mesh.m).map(|k| 0.5 * (traj.left_trace[k] + traj.left_trace[k + 1])).collect();
    let tmax = tr.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let (mut dec_sum, mut pred_sum) = (0.0, 0.0);
    for k in 0..mesh.m {
        if norms[k] > 0.0 {
            r.max_growth = r.max_growth.max((norms[k + 1] - norms[k]) / norms[k]);
        }
        let (a, b) = mesh.theta(k);
        if a != b {
            continue;
        }
        let dec = 0.5 * (norms[k].powi(2) - norms[k + 1].powi(2));
        let pred = 0.5 * mesh.dt * tr[k] * tr[k];
        dec_sum += dec;
        pred_sum += pred;
        if tr[k].abs() >= 0.1 * tmax && pred > 0.0 {
            let q = dec / pred;
            r.ratio_min = r.ratio_min.min(q);
            r.ratio_max = r.ratio_max.max(q);
            r.steps_checked += 1;
        }
    }
    r.cumulative_ratio = if pred_sum > 0.0 { dec_sum / pred_sum } else { 0.0 };
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEstimates {
    /// `(||u||_{L^2 H^1} + ||u_x(.,0)||_{L^2}) / ||u0||`.
    pub c1: f64,
    /// Smallest `c2` with `||u0||^2 <= ||u||^2_{L^2L^2}/T + c2 ||u_x(.,0)||^2`.
    pub c2: f64,
}

pub fn energy_estimates(traj: &Trajectory) -> EnergyEstimates {
    let u0 = l2_norm(traj.initial(), traj.mesh.h);
    let tr = traj.left_trace_l2();
    let c1 = if u0 > 0.0 { (traj.l2h1() + tr) / u0 } else { 0.0 };
    let gap = u0 * u0 - traj.l2l2().powi(2) / traj.mesh.t;
    let c2 = if tr > 0.0 { (gap / (tr * tr)).max(0.0) } else { 0.0 };
    EnergyEstimates { c1, c2 }
}

/// `(||v||_{L^inf L^2} + ||v||_{L^2 H^1}) / ||f||_{L^2 H^-1}` for an adjoint
/// run with distributed forcing.
pub fn adjoint_forcing_ratio(v: &Trajectory, f: &[Vec<f64>]) -> f64 {
    let mesh = &v.mesh;
    let fn2: f64 = f.iter().map(|r| hminus1_norm(r, mesh.h).powi(2)).sum::<f64>() * mesh.dt;
    if fn2 == 0.0 {
        return 0.0;
    }
    (v.linf_l2() + v.l2h1()) / fn2.sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEnergy {
    pub kind: WeightKind,
    pub linf_h: f64,
    pub l2_v: f64,
    /// Right-hand side `||u0||_H + ||h||_{L^2 L^2}`.
    pub rhs: f64,
    pub ratio: f64,
}

/// `||u||_{L^inf H} + ||u||_{L^2 V}` against `||u0||_H + ||h||_{L^2L^2}`.
pub fn weighted_energy_report(traj: &Trajectory, kind: WeightKind, control_h: Option<&[Vec<f64>]>) -> WeightedEnergy {
    let mesh = &traj.mesh;
    let linf_h = traj.values.iter().map(|u| wnorm(u, mesh, kind)).fold(0.0, f64::max);
    let v2: Vec<f64> = traj.values.iter().map(|u| vnorm(u, mesh, kind.v_kind()).powi(2)).collect();
    let l2_v = time_trapezoid(&v2, mesh.dt).sqrt();
    let hn = control_h.map_or(0.0, |h| (h.iter().map(|r| l2_norm(r, mesh.h).powi(2)).sum::<f64>() * mesh.dt).sqrt());
    let rhs = wnorm(traj.initial(), mesh, kind) + hn;
    let lhs = linf_h + l2_v;
    WeightedEnergy { kind, linf_h, l2_v, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 } }
}
