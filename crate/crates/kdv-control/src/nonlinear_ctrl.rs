//! Fixed-point drivers for nonlinear control.
//!
//! Both drivers pin the control inside each iteration to the penalized HUM
//! minimizer, so the iteration map is single valued, and both validate the
//! final control with a full nonlinear re-solve.

use crate::error::{KdvError, Result};
use crate::hum::{synthesize_null_control, synthesize_weighted_exact_control, ControlProblem, ControlResult, Mode};
use crate::mesh::{build_operator, BcTag, DiscreteOperator, Mesh};
use crate::rng::CounterRng;
use crate::kdv_solve::{nonlinear_residual, solve_forward, solve_nonlinear, Forcing, InnerConfig, Potential, Trajectory};
use crate::weights::{l2_norm, time_trapezoid, vnorm, wnorm, VNormKind, WeightKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardConfig {
    pub max_outer: usize,
    /// Stop when the successive-iterate distance falls below
    /// `outer_tol * max(1, |iterate|)`.
    pub outer_tol: f64,
    pub ball_radius: f64,
    pub damping: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub tikhonov_eps: f64,
    pub delta: f64,
    pub inner: InnerConfig,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            max_outer: 30,
            outer_tol: 1e-8,
            ball_radius: 0.05,
            damping: 1.0,
            cg_tol: 1e-10,
            cg_max: 500,
            tikhonov_eps: 1e-8,
            delta: 1e-2,
            inner: InnerConfig::default(),
        }
    }
}

impl PicardConfig {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(KdvError::Invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_outer == 0 {
            return Err(KdvError::Invalid("max_outer must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the outer iteration log.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardStep {
    pub k: usize,
    pub outer_dist: f64,
    /// Terminal residual of the linear problem solved at this step.
    pub terminal_residual: f64,
    pub cg_iters: usize,
}

#[derive(Clone, Debug)]
pub struct NonlinearControl {
    /// Control and nonlinear re-solve; `terminal_residual` comes from the
    /// nonlinear re-solve.
    pub result: ControlResult,
    pub log: Vec<PicardStep>,
    pub converged: bool,
    pub diverged: bool,
    /// Largest inner Picard count over the final nonlinear re-solve.
    pub max_inner: usize,
}

impl NonlinearControl {
    pub fn outer_iters(&self) -> usize {
        self.log.len()
    }
}

fn l2l2(values: &[Vec<f64>], mesh: &Mesh) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| l2_norm(v, mesh.h).powi(2)).collect();
    time_trapezoid(&sq, mesh.dt).sqrt()
}

fn l2v(values: &[Vec<f64>], mesh: &Mesh) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| vnorm(v, mesh, VNormKind::WeightedV).powi(2)).collect();
    time_trapezoid(&sq, mesh.dt).sqrt()
}

fn diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(p, q)| p.iter().zip(q).map(|(x, y)| x - y).collect()).collect()
}

fn blend(old: &[Vec<f64>], new: &[Vec<f64>], d: f64) -> Vec<Vec<f64>> {
    old.iter().zip(new).map(|(p, q)| p.iter().zip(q).map(|(x, y)| (1.0 - d) * x + d * y).collect()).collect()
}

/// Tracks successive distances and flags three consecutive increases.
struct Monitor {
    last: f64,
    growth: usize,
}

impl Monitor {
    fn new() -> Self {
        Monitor { last: f64::INFINITY, growth: 0 }
    }

    fn push(&mut self, d: f64) -> bool {
        self.growth = if d > self.last { self.growth + 1 } else { 0 };
        self.last = d;
        self.growth >= 3
    }
}

/// Drives `u0` onto the free nonlinear trajectory from `u0bar`.
pub fn null_control_to_trajectory(
    mesh: &Mesh,
    u0bar: &[f64],
    u0: &[f64],
    omega: (f64, f64),
    cfg: &PicardConfig,
) -> Result<NonlinearControl> {
    cfg.validate()?;
    let op = build_operator(mesh, BcTag::Forward)?;
    let bar = solve_nonlinear(mesh, &op, u0bar, &Forcing::Zero, cfg.inner)?.trajectory;
    let q0: Vec<f64> = u0.iter().zip(u0bar).map(|(a, b)| a - b).collect();
    let mut warnings = Vec::new();
    let q0n = l2_norm(&q0, mesh.h);
    if q0n > cfg.delta {
        warnings.push(format!("initial gap {q0n:.3e} exceeds delta {:.3e}", cfg.delta));
    }

    let mut z = vec![vec![0.0; mesh.n]; mesh.m + 1];
    let mut log = Vec::new();
    let mut mon = Monitor::new();
    let (mut converged, mut diverged) = (false, false);
    let mut best: Option<(f64, ControlResult)> = None;
    for k in 1..=cfg.max_outer {
        let values: Vec<Vec<f64>> =
            bar.values.iter().zip(&z).map(|(b, q)| b.iter().zip(q).map(|(x, y)| x + 0.5 * y).collect()).collect();
        let mut prob = ControlProblem::new(mesh.clone(), Mode::DistributedNull, q0.clone());
        prob.omega = omega;
        prob.xi = Potential::Field { base: 1.0, values };
        prob.cg_tol = cfg.cg_tol;
        prob.cg_max = cfg.cg_max;
        prob.tikhonov_eps = cfg.tikhonov_eps;
        prob.delta = f64::INFINITY;
        let lin = synthesize_null_control(&prob)?;
        let znew = blend(&z, &lin.trajectory.values, cfg.damping);
        let dist = l2l2(&diff(&znew, &z), mesh);
        let scale = l2l2(&znew, mesh).max(1.0);
        log.push(PicardStep { k, outer_dist: dist, terminal_residual: lin.terminal_residual, cg_iters: lin.cg_iters });
        z = znew;
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, lin));
        }
        if dist <= cfg.outer_tol * scale {
            converged = true;
            break;
        }
        if mon.push(dist) {
            diverged = true;
            break;
        }
    }
    let (_, lin) = best.expect("at least one outer step");

    let run = solve_nonlinear(mesh, &op, u0, &lin.control, cfg.inner)?;
    let gap: Vec<f64> = run.trajectory.terminal().iter().zip(bar.terminal()).map(|(a, b)| a - b).collect();
    let res = l2_norm(&gap, mesh.h);
    let q: Vec<Vec<f64>> = diff(&run.trajectory.values, &bar.values);
    let qlinf = q.iter().map(|v| l2_norm(v, mesh.h)).fold(0.0, f64::max);
    let mut result = lin;
    result.certificate.insert("q_linf_l2_sq".into(), qlinf * qlinf);
    if q0n > 0.0 {
        result.certificate.insert("q_linf_l2_sq_over_q0_sq".into(), qlinf * qlinf / (q0n * q0n));
    }
    result.terminal_residual = res;
    result.relative_residual = if q0n > 0.0 { res / q0n } else { res };
    result.trajectory = run.trajectory;
    result.warnings.extend(warnings);
    if !converged {
        result.warnings.push(format!("outer Picard stopped after {} iterations", log.len()));
    }
    Ok(NonlinearControl { result, log, converged, diverged, max_inner: run.max_inner })
}

/// Interval nonlinear sources `D1(u_th^2 / 2)` of a space-time field.
fn nonlinear_source(mesh: &Mesh, op: &DiscreteOperator, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..mesh.m)
        .map(|k| {
            let th = mesh.theta_mix(k, &u[k], &u[k + 1]);
            let sq: Vec<f64> = th.iter().map(|x| 0.5 * x * x).collect();
            op.d1.matvec(&sq)
        })
        .collect()
}

/// The map of the weighted exact-control fixed point, with its pieces.
pub struct ExactMap {
    mesh: Mesh,
    op: DiscreteOperator,
    u1: Vec<f64>,
    nu: f64,
    cfg: PicardConfig,
    free: Trajectory,
}

pub struct MapOutput {
    pub values: Vec<Vec<f64>>,
    pub control: ControlResult,
}

impl ExactMap {
    pub fn new(mesh: &Mesh, u0: &[f64], u1: &[f64], nu: f64, cfg: &PicardConfig) -> Result<ExactMap> {
        let op = build_operator(mesh, BcTag::Forward)?;
        let free = solve_forward(mesh, &op, u0, &Forcing::Zero, &Potential::Const(1.0))?;
        Ok(ExactMap { mesh: mesh.clone(), op, u1: u1.to_vec(), nu, cfg: *cfg, free })
    }

    /// `F(u) = u_L + Theta1(Gamma(u1 - u_L(T) + w(T))) - w` with `w` the
    /// linear response to the source `D1(u^2/2)`.
    pub fn apply(&self, u: &[Vec<f64>]) -> Result<MapOutput> {
        let mesh = &self.mesh;
        let zero = vec![0.0; mesh.n];
        let src = nonlinear_source(mesh, &self.op, u);
        let w = solve_forward(mesh, &self.op, &zero, &Forcing::Distributed(src), &Potential::Const(1.0))?;
        let target: Vec<f64> =
            self.u1.iter().zip(self.free.terminal()).zip(w.terminal()).map(|((a, b), c)| a - b + c).collect();
        let mut prob = ControlProblem::new(mesh.clone(), Mode::WeightedExact, zero);
        prob.nu = self.nu;
        prob.u1 = Some(target);
        prob.cg_tol = self.cfg.cg_tol;
        prob.cg_max = self.cfg.cg_max;
        prob.tikhonov_eps = self.cfg.tikhonov_eps;
        let c = synthesize_weighted_exact_control(&prob)?;
        let values = (0..=mesh.m)
            .map(|j| (0..mesh.n).map(|i| self.free.values[j][i] + c.trajectory.values[j][i] - w.values[j][i]).collect())
            .collect();
        Ok(MapOutput { values, control: c })
    }

    pub fn norm(&self, u: &[Vec<f64>]) -> f64 {
        l2v(u, &self.mesh)
    }
}

/// Empirical contraction data of the exact-control map on its ball.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionProbe {
    pub pairs: usize,
    /// Largest `|F(u) - F(v)| / |u - v|`.
    pub max_ratio: f64,
    /// Largest `|F(u) - F(v)| / ((|u| + |v|) |u - v|)`.
    pub c_emp: f64,
    pub radius: f64,
}

impl ContractionProbe {
    pub fn within_bound(&self) -> bool {
        self.max_ratio <= 2.0 * self.c_emp * self.radius * (1.0 + 1e-12)
    }
}

/// Smooth random space-time field of `L^2(0,T;V)` norm `r`.
fn random_field(mesh: &Mesh, rng: &mut CounterRng, r: f64) -> Vec<Vec<f64>> {
    let coef: Vec<(f64, f64)> = (1..=4).map(|_| (rng.normal(), rng.normal())).collect();
    let f: Vec<Vec<f64>> = (0..=mesh.m)
        .map(|j| {
            let t = mesh.time(j) / mesh.t_end();
            mesh.nodes()
                .iter()
                .map(|x| {
                    let s = x / mesh.l;
                    let bump = s * (1.0 - s).powi(2);
                    coef.iter()
                        .enumerate()
                        .map(|(k, (a, b))| bump * (a + b * t) * ((k + 1) as f64 * std::f64::consts::PI * s).sin())
                        .sum()
                })
                .collect()
        })
        .collect();
    let nrm = l2v(&f, mesh);
    let scale = r * rng.uniform() / nrm;
    f.into_iter().map(|v| v.into_iter().map(|x| x * scale).collect()).collect()
}

pub fn contraction_probe(map: &ExactMap, pairs: usize, seed: u64) -> Result<ContractionProbe> {
    let mut rng = CounterRng::new(seed, 0x7c0);
    let r = map.cfg.ball_radius;
    let (mut max_ratio, mut c_emp) = (0.0f64, 0.0f64);
    for _ in 0..pairs {
        let u = random_field(&map.mesh, &mut rng, r);
        let v = random_field(&map.mesh, &mut rng, r);
        let fu = map.apply(&u)?.values;
        let fv = map.apply(&v)?.values;
        let du = map.norm(&diff(&u, &v));
        let df = map.norm(&diff(&fu, &fv));
        if du > 0.0 {
            max_ratio = max_ratio.max(df / du);
            c_emp = c_emp.max(df / ((map.norm(&u) + map.norm(&v)) * du));
        }
    }
    Ok(ContractionProbe { pairs, max_ratio, c_emp, radius: r })
}

/// Empirical constant of `|u u_x|_{L^1(0,T;H)} <= c |u|^2_{L^2(0,T;V)}`.
pub fn bilinear_constant(mesh: &Mesh, op: &DiscreteOperator, u: &[Vec<f64>]) -> f64 {
    let src = nonlinear_source(mesh, op, u);
    let l1h: f64 = src.iter().map(|s| wnorm(s, mesh, WeightKind::InvLmXdX)).sum::<f64>() * mesh.dt;
    let v = l2v(u, mesh);
    if v > 0.0 {
        l1h / (v * v)
    } else {
        0.0
    }
}

/// Steers `u0` to `u1` under the nonlinear equation with `f = (rho h)_x`.
pub fn exact_control_nonlinear(
    mesh: &Mesh,
    u0: &[f64],
    u1: &[f64],
    nu: f64,
    cfg: &PicardConfig,
) -> Result<NonlinearControl> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    for (name, v) in [("u0", u0), ("u1", u1)] {
        let w = wnorm(v, mesh, WeightKind::InvLmXdX);
        if w > cfg.delta {
            warnings.push(format!("{name} weighted norm {w:.3e} exceeds delta {:.3e}", cfg.delta));
        }
    }
    let map = ExactMap::new(mesh, u0, u1, nu, cfg)?;
    let mut u = vec![vec![0.0; mesh.n]; mesh.m + 1];
    let mut log = Vec::new();
    let mut mon = Monitor::new();
    let (mut converged, mut diverged) = (false, false);
    let mut best: Option<(f64, ControlResult)> = None;
    for k in 1..=cfg.max_outer {
        let out = map.apply(&u)?;
        let unew = blend(&u, &out.values, cfg.damping);
        let dist = map.norm(&diff(&unew, &u));
        let scale = map.norm(&unew).max(1.0);
        log.push(PicardStep {
            k,
            outer_dist: dist,
            terminal_residual: out.control.terminal_residual,
            cg_iters: out.control.cg_iters,
        });
        u = unew;
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, out.control));
        }
        if dist <= cfg.outer_tol * scale {
            converged = true;
            break;
        }
        if mon.push(dist) {
            diverged = true;
            break;
        }
    }
    let (_, ctl) = best.expect("at least one outer step");
    let run = solve_nonlinear(mesh, &map.op, u0, &ctl.control, cfg.inner)?;
    let gap: Vec<f64> = run.trajectory.terminal().iter().zip(u1).map(|(a, b)| a - b).collect();
    let res = wnorm(&gap, mesh, WeightKind::InvLmXdX);
    let u1n = wnorm(u1, mesh, WeightKind::InvLmXdX);
    let mut result = ctl;
    result.certificate.insert("bilinear_c".into(), bilinear_constant(mesh, &map.op, &run.trajectory.values));
    let r = nonlinear_residual(mesh, &map.op, &run.trajectory.values);
    let f = result.control.to_distributed(mesh, &map.op);
    let defect = diff(&r, &f).iter().map(|v| l2_norm(v, mesh.h)).fold(0.0, f64::max);
    result.certificate.insert("scheme_defect".into(), defect);
    result.terminal_residual = res;
    result.relative_residual = if u1n > 0.0 { res / u1n } else { res };
    result.trajectory = run.trajectory;
    result.warnings.extend(warnings);
    if !converged {
        result.warnings.push(format!("outer Picard stopped after {} iterations", log.len()));
    }
    Ok(NonlinearControl { result, log, converged, diverged, max_inner: run.max_inner })
}
