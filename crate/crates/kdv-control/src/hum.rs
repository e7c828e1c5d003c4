//! Control synthesis by the Hilbert Uniqueness Method.
//!
//! A Gramian application runs the adjoint backward from terminal data,
//! turns the interval observations into a control, and runs the state
//! forward from rest.  Because the discrete adjoint march is the exact
//! transpose of the forward one, the Gramian equals `O^T O` for the
//! observation map `O`, so it is symmetric positive semidefinite in the
//! mode's inner product up to rounding.

use crate::error::{KdvError, Result};
use crate::mesh::{build_operator, BcTag, DiscreteOperator, Mesh};
use crate::kdv_solve::{solve_adjoint_with_obs, solve_forward, Forcing, Potential, Rho, Trajectory};
use crate::weights::{l2_inner, l2_norm, winner, wnorm, WeightKind};
use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    DistributedNull,
    WeightedExact,
    BoundarySubdomain,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DistributedNull => "distributed-null",
            Mode::WeightedExact => "weighted-exact",
            Mode::BoundarySubdomain => "boundary-subdomain",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub mesh: Mesh,
    pub mode: Mode,
    /// Control region for the distributed mode.
    pub omega: (f64, f64),
    /// Width of the `rho` profile for the weighted mode.
    pub nu: f64,
    pub xi: Potential,
    pub u0: Vec<f64>,
    pub u1: Option<Vec<f64>>,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub tikhonov_eps: f64,
    /// Smallness threshold for the potential surrogate (warning only).
    pub delta: f64,
    /// Nodes where the terminal state is prescribed; all nodes if `None`.
    pub target_mask: Option<Vec<bool>>,
}

impl ControlProblem {
    pub fn new(mesh: Mesh, mode: Mode, u0: Vec<f64>) -> ControlProblem {
        let xi = match mode {
            Mode::DistributedNull => Potential::Zero,
            _ => Potential::Const(1.0),
        };
        ControlProblem {
            omega: (0.3 * mesh.l, 0.6 * mesh.l),
            nu: 0.25 * mesh.l,
            mesh,
            mode,
            xi,
            u0,
            u1: None,
            cg_tol: 1e-10,
            cg_max: 500,
            tikhonov_eps: 1e-8,
            delta: 1e-2,
            target_mask: None,
        }
    }

    fn validate(&self) -> Result<()> {
        crate::error::check_len(&self.u0, self.mesh.n)?;
        if let Some(mask) = &self.target_mask {
            if mask.len() != self.mesh.n {
                return Err(KdvError::Dimension { expected: self.mesh.n, got: mask.len() });
            }
        }
        if let Some(u1) = &self.u1 {
            crate::error::check_len(u1, self.mesh.n)?;
        }
        match self.mode {
            Mode::DistributedNull if self.u1.is_some() => {
                Err(KdvError::Invalid("distributed null control takes no target".into()))
            }
            Mode::WeightedExact | Mode::BoundarySubdomain if self.u1.is_none() => {
                Err(KdvError::Invalid(format!("{} needs a target state", self.mode.name())))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ControlResult {
    pub control: Forcing,
    /// Measured by an independent forward solve with `control`.
    pub terminal_residual: f64,
    pub relative_residual: f64,
    pub cg_iters: usize,
    pub converged: bool,
    pub gramian_quadform: f64,
    pub cost: f64,
    pub ritz_min: f64,
    pub ritz_max: f64,
    pub certificate: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub trajectory: Trajectory,
    /// Terminal adjoint data `vT` that generates `control`.
    pub adjoint_datum: Vec<f64>,
}

/// Gramian of one control problem.
pub struct Gramian {
    pub mesh: Mesh,
    pub op: DiscreteOperator,
    pub mode: Mode,
    pub xi: Potential,
    omega: (f64, f64),
    rho: Option<Rho>,
    mask: Option<Vec<bool>>,
}

impl Gramian {
    pub fn new(prob: &ControlProblem) -> Result<Gramian> {
        let mesh = prob.mesh.clone();
        let bc = match prob.mode {
            Mode::BoundarySubdomain => BcTag::SubdomainForward(mesh.l),
            _ => BcTag::Forward,
        };
        let op = build_operator(&mesh, bc)?;
        let rho = match prob.mode {
            Mode::WeightedExact => Some(Rho::new(mesh.l, prob.nu)?),
            _ => None,
        };
        Ok(Gramian { mesh, op, mode: prob.mode, xi: prob.xi.clone(), omega: prob.omega, rho, mask: prob.target_mask.clone() })
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.mode {
            Mode::WeightedExact => winner(a, b, &self.mesh, WeightKind::LmXdX),
            _ => l2_inner(a, b, self.mesh.h),
        }
    }

    /// The control generated by terminal adjoint data `vt`.
    pub fn observe(&self, vt: &[f64]) -> Result<Forcing> {
        let (_, obs) = solve_adjoint_with_obs(&self.mesh, &self.op, vt, &self.xi, &Forcing::Zero)?;
        let mesh = &self.mesh;
        Ok(match self.mode {
            Mode::DistributedNull => Forcing::Distributed(
                obs.into_iter()
                    .map(|o| {
                        o.iter()
                            .enumerate()
                            .map(|(i, v)| if crate::carleman::in_omega(mesh.x(i + 1), self.omega) { *v } else { 0.0 })
                            .collect()
                    })
                    .collect(),
            ),
            Mode::WeightedExact => {
                let rho = self.rho.expect("weighted mode has rho");
                Forcing::Weighted { rho, h: obs.iter().map(|o| rho.apply_t(o, mesh)).collect() }
            }
            Mode::BoundarySubdomain => {
                let w = self.op.control_weight() * mesh.h;
                Forcing::Boundary(obs.iter().map(|o| w * o[mesh.n - 1]).collect())
            }
        })
    }

    /// Maps a state's terminal value to the Gramian's output space.
    fn terminal_map(&self, u: &[f64]) -> Vec<f64> {
        let mut out = match self.mode {
            Mode::WeightedExact => u.iter().enumerate().map(|(i, v)| v / (self.mesh.l - self.mesh.x(i + 1))).collect(),
            _ => u.to_vec(),
        };
        self.project(&mut out);
        out
    }

    fn project(&self, v: &mut [f64]) {
        if let Some(mask) = &self.mask {
            v.iter_mut().zip(mask).filter(|(_, m)| !**m).for_each(|(x, _)| *x = 0.0);
        }
    }

    pub fn free_terminal(&self, u0: &[f64]) -> Result<Vec<f64>> {
        Ok(solve_forward(&self.mesh, &self.op, u0, &Forcing::Zero, &self.xi)?.terminal().to_vec())
    }

    pub fn apply(&self, vt: &[f64]) -> Result<Vec<f64>> {
        let mut vt = vt.to_vec();
        self.project(&mut vt);
        if vt.iter().all(|v| *v == 0.0) {
            return Ok(vt);
        }
        let f = self.observe(&vt)?;
        let zero = vec![0.0; self.mesh.n];
        let u = solve_forward(&self.mesh, &self.op, &zero, &f, &self.xi)?;
        Ok(self.terminal_map(u.terminal()))
    }

    /// Observation-side pairing `sum_k dt <c_k(a), c_k(b)>` of two controls.
    pub fn control_pairing(&self, a: &Forcing, b: &Forcing) -> f64 {
        let mesh = &self.mesh;
        match (a, b) {
            (Forcing::Distributed(x), Forcing::Distributed(y)) | (Forcing::Weighted { h: x, .. }, Forcing::Weighted { h: y, .. }) => {
                x.iter().zip(y).map(|(p, q)| l2_inner(p, q, mesh.h)).sum::<f64>() * mesh.dt
            }
            (Forcing::Boundary(x), Forcing::Boundary(y)) => x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() * mesh.dt,
            _ => 0.0,
        }
    }

    /// Dense Gramian in an orthonormal basis (columns of `basis`, orthonormal
    /// in `inner`), symmetrized.
    pub fn projected(&self, basis: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let k = basis.len();
        let images: Vec<Vec<f64>> = basis.iter().map(|q| self.apply(q)).collect::<Result<_>>()?;
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                g[(i, j)] = self.inner(&images[i], &basis[j]);
            }
        }
        Ok((&g + g.transpose()) * 0.5)
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub rel_residual: f64,
    /// Extreme Ritz values of the Gramian from the Lanczos recurrence.
    pub ritz_min: f64,
    pub ritz_max: f64,
    pub history: Vec<f64>,
}

/// Conjugate gradient on `(G + eps I) x = rhs` in the Gramian's inner
/// product.
pub fn cg(g: &Gramian, rhs: &[f64], eps: f64, tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let rhs_norm = g.inner(rhs, rhs).sqrt();
    let mut rr = rhs_norm * rhs_norm;
    let mut history = vec![1.0];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    if rhs_norm == 0.0 {
        return Ok(CgOutcome { x, iters: 0, converged: true, rel_residual: 0.0, ritz_min: 0.0, ritz_max: 0.0, history });
    }
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iter {
        let mut ap = g.apply(&p)?;
        ap.iter_mut().zip(&p).for_each(|(a, q)| *a += eps * q);
        let pap = g.inner(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(a, q)| *a += alpha * q);
        r.iter_mut().zip(&ap).for_each(|(a, q)| *a -= alpha * q);
        let rr_new = g.inner(&r, &r);
        let beta = rr_new / rr;
        alphas.push(alpha);
        betas.push(beta);
        rr = rr_new;
        iters += 1;
        let rel = rr.sqrt() / rhs_norm;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        p = r.iter().zip(&p).map(|(a, q)| a + beta * q).collect();
    }
    let (ritz_min, ritz_max) = lanczos_extremes(&alphas, &betas, eps);
    Ok(CgOutcome { x, iters, converged, rel_residual: rr.sqrt() / rhs_norm, ritz_min, ritz_max, history })
}

/// Extreme eigenvalues of the Lanczos tridiagonal built from CG
/// coefficients, shifted back by `eps`.
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64], eps: f64) -> (f64, f64) {
    let k = alphas.len();
    if k == 0 {
        return (0.0, 0.0);
    }
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = 1.0 / alphas[i] + if i > 0 { betas[i - 1] / alphas[i - 1] } else { 0.0 };
        if i + 1 < k {
            let off = betas[i].sqrt() / alphas[i];
            t[(i, i + 1)] = off;
            t[(i + 1, i)] = off;
        }
    }
    let ev = SymmetricEigen::new(t).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo - eps, hi - eps)
}

fn finish(
    g: &Gramian,
    prob: &ControlProblem,
    out: CgOutcome,
    target: &[f64],
    residual_of: impl Fn(&[f64]) -> (f64, f64),
) -> Result<ControlResult> {
    let control = g.observe(&out.x)?;
    let traj = solve_forward(&g.mesh, &g.op, &prob.u0, &control, &g.xi)?;
    let mut diff: Vec<f64> = traj.terminal().iter().zip(target).map(|(a, b)| a - b).collect();
    g.project(&mut diff);
    let (abs, rel) = residual_of(&diff);
    let quad = g.control_pairing(&control, &control);
    let mut warnings = Vec::new();
    let xs = prob.xi.surrogate_norm(&g.mesh);
    if xs > prob.delta {
        warnings.push(format!("potential surrogate {xs:.3e} exceeds delta {:.3e}", prob.delta));
    }
    if !out.converged {
        warnings.push(format!("CG stopped after {} iterations at relative residual {:.3e}", out.iters, out.rel_residual));
    }
    let mut certificate = BTreeMap::new();
    certificate.insert("cg_rel_residual".to_string(), out.rel_residual);
    certificate.insert("potential_surrogate".to_string(), xs);
    Ok(ControlResult {
        cost: control.cost(&g.mesh),
        control,
        terminal_residual: abs,
        relative_residual: rel,
        cg_iters: out.iters,
        converged: out.converged,
        gramian_quadform: quad,
        ritz_min: out.ritz_min,
        ritz_max: out.ritz_max,
        certificate,
        warnings,
        trajectory: traj,
        adjoint_datum: out.x,
    })
}

fn zero_result(g: &Gramian, prob: &ControlProblem) -> Result<ControlResult> {
    let control = match g.mode {
        Mode::BoundarySubdomain => Forcing::Boundary(vec![0.0; g.mesh.m]),
        _ => g.observe(&vec![0.0; g.mesh.n])?,
    };
    let traj = solve_forward(&g.mesh, &g.op, &prob.u0, &control, &g.xi)?;
    Ok(ControlResult {
        control,
        terminal_residual: 0.0,
        relative_residual: 0.0,
        cg_iters: 0,
        converged: true,
        gramian_quadform: 0.0,
        cost: 0.0,
        ritz_min: 0.0,
        ritz_max: 0.0,
        certificate: BTreeMap::new(),
        warnings: Vec::new(),
        trajectory: traj,
        adjoint_datum: vec![0.0; g.mesh.n],
    })
}

/// Drives `u0` to rest: `(G + eps I) vT = -u_free(T)`, `f = 1_omega v`.
pub fn synthesize_null_control(prob: &ControlProblem) -> Result<ControlResult> {
    prob.validate()?;
    let g = Gramian::new(prob)?;
    let b = g.free_terminal(&prob.u0)?;
    if b.iter().all(|v| *v == 0.0) {
        return zero_result(&g, prob);
    }
    let mut rhs: Vec<f64> = b.iter().map(|v| -v).collect();
    g.project(&mut rhs);
    let out = cg(&g, &rhs, prob.tikhonov_eps, prob.cg_tol, prob.cg_max)?;
    let u0n = l2_norm(&prob.u0, g.mesh.h);
    let zero = vec![0.0; g.mesh.n];
    let mut res = finish(&g, prob, out, &zero, |d| {
        let a = l2_norm(d, g.mesh.h);
        (a, if u0n > 0.0 { a / u0n } else { a })
    })?;
    if u0n > 0.0 {
        res.certificate.insert("cost_over_u0_sq".to_string(), res.cost / (u0n * u0n));
    }
    Ok(res)
}

/// Steers `u0` to `u1` with `f = (rho h)_x` supported near `x = L`.
pub fn synthesize_weighted_exact_control(prob: &ControlProblem) -> Result<ControlResult> {
    prob.validate()?;
    let g = Gramian::new(prob)?;
    let u1 = prob.u1.clone().expect("validated");
    let free = g.free_terminal(&prob.u0)?;
    let gap: Vec<f64> = u1.iter().zip(&free).map(|(a, b)| a - b).collect();
    if gap.iter().all(|v| *v == 0.0) {
        return zero_result(&g, prob);
    }
    let rhs = g.terminal_map(&gap);
    let out = cg(&g, &rhs, prob.tikhonov_eps, prob.cg_tol, prob.cg_max)?;
    let u1n = wnorm(&u1, &g.mesh, WeightKind::InvLmXdX);
    let mesh = g.mesh.clone();
    let mut res = finish(&g, prob, out, &u1, |d| {
        let a = wnorm(d, &mesh, WeightKind::InvLmXdX);
        (a, if u1n > 0.0 { a / u1n } else { a })
    })?;
    if let Forcing::Weighted { h, .. } = &res.control {
        // (T - t)-weighted size of the control at interval midpoints
        let reg: f64 = h
            .iter()
            .enumerate()
            .map(|(k, r)| (mesh.t - (k as f64 + 0.5) * mesh.dt) * l2_norm(r, mesh.h).powi(2))
            .sum::<f64>()
            * mesh.dt;
        res.certificate.insert("h_weighted_tmt".to_string(), reg);
    }
    Ok(res)
}

/// Steers `u0` to `target` on a subdomain with Neumann data at its right end.
pub fn synthesize_boundary_control(prob: &ControlProblem) -> Result<ControlResult> {
    prob.validate()?;
    let g = Gramian::new(prob)?;
    let target = prob.u1.clone().expect("validated");
    let free = g.free_terminal(&prob.u0)?;
    let mut rhs: Vec<f64> = target.iter().zip(&free).map(|(a, b)| a - b).collect();
    g.project(&mut rhs);
    if rhs.iter().all(|v| *v == 0.0) {
        return zero_result(&g, prob);
    }
    let out = cg(&g, &rhs, prob.tikhonov_eps, prob.cg_tol, prob.cg_max)?;
    let mut masked = target.clone();
    g.project(&mut masked);
    let tn = l2_norm(&masked, g.mesh.h);
    let h = g.mesh.h;
    finish(&g, prob, out, &target, |d| {
        let a = l2_norm(d, h);
        (a, if tn > 0.0 { a / tn } else { a })
    })
}

/// Symmetry, positivity and duality checks on a pair of random vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraCheck {
    /// `|<Ga,b> - <a,Gb>| / (|a| |b|)`.
    pub asymmetry: f64,
    /// `<Ga,a>`, nonnegative.
    pub quad_a: f64,
    /// `|<Ga,b> - sum_k dt <c(a), c(b)>| / (|a| |b|)`.
    pub duality_gap: f64,
}

pub fn gramian_algebra(g: &Gramian, a: &[f64], b: &[f64]) -> Result<AlgebraCheck> {
    let ga = g.apply(a)?;
    let gb = g.apply(b)?;
    let na = g.inner(a, a).sqrt();
    let nb = g.inner(b, b).sqrt();
    let gab = g.inner(&ga, b);
    let agb = g.inner(a, &gb);
    let pairing = g.control_pairing(&g.observe(a)?, &g.observe(b)?);
    Ok(AlgebraCheck {
        asymmetry: (gab - agb).abs() / (na * nb),
        quad_a: g.inner(&ga, a),
        duality_gap: (gab - pairing).abs() / (na * nb),
    })
}

/// Orthonormalizes `vs` in place (modified Gram-Schmidt under `inner`).
pub fn orthonormalize(vs: &mut [Vec<f64>], inner: impl Fn(&[f64], &[f64]) -> f64) {
    for i in 0..vs.len() {
        for j in 0..i {
            let c = inner(&vs[i], &vs[j]);
            let (head, tail) = vs.split_at_mut(i);
            tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= c * b);
        }
        let nrm = inner(&vs[i], &vs[i]).sqrt();
        if nrm > 0.0 {
            vs[i].iter_mut().for_each(|a| *a /= nrm);
        }
    }
}

/// Orthonormal basis of the `k`-dimensional invariant subspace of the
/// adjoint generator nearest zero, by subspace iteration on
/// `(D^T + sigma I)^{-1}`.
pub fn low_frequency_subspace(g: &Gramian, k: usize, sigma: f64, iters: usize) -> Result<Vec<Vec<f64>>> {
    let mesh = &g.mesh;
    let e = g.op.with_potential(&g.xi.slice(mesh, 0)).transpose().shift(sigma);
    let lu = e.lu()?;
    let h = mesh.h;
    let mut q: Vec<Vec<f64>> = (1..=k)
        .map(|j| mesh.nodes().iter().map(|x| (j as f64 * std::f64::consts::PI * x / mesh.l).sin()).collect())
        .collect();
    orthonormalize(&mut q, |a, b| l2_inner(a, b, h));
    for _ in 0..iters {
        for v in q.iter_mut() {
            lu.solve_in_place(v);
        }
        orthonormalize(&mut q, |a, b| l2_inner(a, b, h));
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRitz {
    /// Smallest Ritz value of the Gramian on the low-frequency subspace.
    pub subspace_min: f64,
    pub subspace_max: f64,
    /// Extremes from a plain Lanczos run of `lanczos_steps` steps.
    pub lanczos_min: f64,
    pub lanczos_max: f64,
}

/// Ritz estimates of the boundary Gramian on the whole interval `(0, L)`
/// of `mesh` with Neumann control at `x = L`.
pub fn boundary_gramian_ritz(mesh: &Mesh, k: usize, lanczos_steps: usize) -> Result<BoundaryRitz> {
    let mut prob = ControlProblem::new(mesh.clone(), Mode::BoundarySubdomain, vec![0.0; mesh.n]);
    prob.xi = Potential::Const(1.0);
    let g = Gramian::new(&prob)?;
    let basis = low_frequency_subspace(&g, k, 1e-2, 60)?;
    let proj = g.projected(&basis)?;
    let ev = SymmetricEigen::new(proj).eigenvalues;
    let subspace_min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let subspace_max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start: Vec<f64> = mesh.nodes().iter().map(|x| x * (mesh.l - x)).collect();
    let out = cg(&g, &start, 0.0, 1e-14, lanczos_steps)?;
    Ok(BoundaryRitz { subspace_min, subspace_max, lanczos_min: out.ritz_min, lanczos_max: out.ritz_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos_of_diagonal_matches_cg_on_identity_scaling() {
        // CG on c*I converges in one step with alpha = 1/c
        let (lo, hi) = lanczos_extremes(&[0.5], &[0.0], 0.0);
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }
}
