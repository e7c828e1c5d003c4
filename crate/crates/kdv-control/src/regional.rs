//! Regional control by two-phase composition, plus critical-length tools.
//!
//! Phase 1 drives the state to rest with a distributed control on
//! `(l1, l2)`.  Phase 2 steers a subdomain state `y` on `(0, l2')` with
//! Neumann data at `l2'`, and the composite `u = mu y` is realized on the
//! whole interval with a forcing that is the exact discrete residual of
//! `mu y`, supported where `mu` varies.

use crate::error::{KdvError, Result};
use crate::hum::{boundary_gramian_ritz, synthesize_boundary_control, ControlProblem, ControlResult, Mode};
use crate::mesh::{build_operator, BcTag, Mesh};
use crate::nonlinear_ctrl::{null_control_to_trajectory, NonlinearControl, PicardConfig, PicardStep};
use crate::kdv_solve::{nonlinear_residual, solve_nonlinear, Forcing, Potential, Trajectory};
use crate::weights::{l2_norm, time_trapezoid};
use std::collections::BTreeMap;
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSet {
    pub kmax: usize,
    pub lengths: Vec<f64>,
}

impl CriticalSet {
    pub fn distance(&self, x: f64) -> f64 {
        self.lengths.iter().map(|c| (c - x).abs()).fold(f64::INFINITY, f64::min)
    }
}

/// `2 pi sqrt((k^2 + k l + l^2) / 3)` for `1 <= k, l <= kmax`.
pub fn critical_lengths(kmax: usize) -> Result<CriticalSet> {
    if kmax == 0 {
        return Err(KdvError::Invalid("kmax must be at least 1".into()));
    }
    let mut v = Vec::new();
    for k in 1..=kmax {
        for l in 1..=kmax {
            let (k, l) = (k as f64, l as f64);
            v.push(2.0 * PI * ((k * k + k * l + l * l) / 3.0).sqrt());
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    Ok(CriticalSet { kmax, lengths: v })
}

/// `l0` itself if it is farther than `margin` from every critical length,
/// otherwise the closest point at distance `margin` from the offending
/// length (downward on ties) that clears the whole set.
pub fn nearest_noncritical(l0: f64, set: &CriticalSet, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(KdvError::Invalid(format!("margin must be positive, got {margin}")));
    }
    if set.distance(l0) > margin {
        return Ok(l0);
    }
    let mut cands: Vec<f64> = set
        .lengths
        .iter()
        .flat_map(|c| [c - margin, c + margin])
        .filter(|x| set.distance(*x) >= margin * (1.0 - 1e-12))
        .collect();
    cands.sort_by(|a, b| (a - l0).abs().total_cmp(&(b - l0).abs()).then(a.total_cmp(b)));
    match cands.first() {
        Some(x) if *x > 0.0 => Ok(*x),
        _ => Err(KdvError::Invalid(format!("no positive non-critical length near {l0}"))),
    }
}

/// Residual of `phi = 1 - cos x` against `phi''' + phi' = 0` and the forward
/// boundary conditions on the mesh interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeResidual {
    /// Discrete `L^2` norm of the five-point `phi''' + phi'` at nodes whose
    /// stencil lies in `[0, L]`.
    pub interior: f64,
    pub phi_left: f64,
    pub phi_right: f64,
    pub dphi_left: f64,
    pub dphi_right: f64,
}

impl ModeResidual {
    pub fn boundary_max(&self) -> f64 {
        [self.phi_left, self.phi_right, self.dphi_left, self.dphi_right].iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

pub fn uncontrollable_mode_residual(mesh: &Mesh) -> ModeResidual {
    let (n, h, l) = (mesh.n, mesh.h, mesh.l);
    let phi: Vec<f64> = (0..=n + 1).map(|i| 1.0 - mesh.x(i).cos()).collect();
    let r: Vec<f64> = (2..n)
        .map(|i| {
            let d3 = (phi[i + 2] - 2.0 * phi[i + 1] + 2.0 * phi[i - 1] - phi[i - 2]) / (2.0 * h * h * h);
            let d1 = (phi[i + 1] - phi[i - 1]) / (2.0 * h);
            d3 + d1
        })
        .collect();
    ModeResidual {
        interior: l2_norm(&r, h),
        phi_left: phi[0],
        phi_right: 1.0 - l.cos(),
        dphi_left: 0.0f64.sin(),
        dphi_right: l.sin(),
    }
}

/// Degree-11 smoothstep: `C^5`, 0 below 0 and 1 above 1.
fn smoothstep11_coeffs() -> [f64; 12] {
    // S(s) = s^6 sum_{k=0}^{5} C(5+k, k) C(11, 5-k) (-s)^k
    let binom = |n: u64, k: u64| -> f64 { (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64) };
    let mut c = [0.0; 12];
    for k in 0..=5u64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        c[6 + k as usize] = sign * binom(5 + k, k) * binom(11, 5 - k);
    }
    c
}

/// Plateau cutoff: 1 on `[0, l1p]`, 0 on `[(l1p + l2p)/2, inf)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffMu {
    pub l1p: f64,
    pub l2p: f64,
    coeffs: [f64; 12],
}

impl CutoffMu {
    pub fn new(l1p: f64, l2p: f64) -> Result<CutoffMu> {
        if !(0.0 < l1p && l1p < l2p) {
            return Err(KdvError::Invalid(format!("cutoff needs 0 < l1p < l2p, got {l1p}, {l2p}")));
        }
        Ok(CutoffMu { l1p, l2p, coeffs: smoothstep11_coeffs() })
    }

    pub fn end(&self) -> f64 {
        0.5 * (self.l1p + self.l2p)
    }

    pub fn degree(&self) -> usize {
        11
    }

    /// `[mu, mu', mu'', mu''']` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 4] {
        let w = self.end() - self.l1p;
        let s = (x - self.l1p) / w;
        if s <= 0.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        if s >= 1.0 {
            return [0.0; 4];
        }
        let mut out = [0.0; 4];
        let mut c = self.coeffs.to_vec();
        for (d, o) in out.iter_mut().enumerate() {
            let p = c.iter().rev().fold(0.0, |acc, a| acc * s + a);
            *o = -p / w.powi(d as i32);
            c = c.iter().enumerate().skip(1).map(|(i, a)| i as f64 * a).collect();
        }
        out[0] += 1.0;
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionalConfig {
    pub l1: f64,
    pub l2: f64,
    pub l1p: f64,
    /// `l2'` starts at `l1p + frac (l2 - l1p)` before the critical-set check.
    pub l2p_fraction: f64,
    /// Distance to the critical set, as a fraction of `L`.
    pub margin_fraction: f64,
    pub phase1: PicardConfig,
    pub phase2: PicardConfig,
    /// Phase 2 prescribes the terminal state on `(0, l1p + match_margin)`
    /// only; `None` prescribes it on the whole subdomain.
    pub match_margin: Option<f64>,
}

impl RegionalConfig {
    pub fn new(l1: f64, l2: f64, l1p: f64) -> RegionalConfig {
        RegionalConfig {
            l1,
            l2,
            l1p,
            l2p_fraction: 0.9,
            margin_fraction: 0.05,
            phase1: PicardConfig::default(),
            phase2: PicardConfig { delta: f64::INFINITY, ..PicardConfig::default() },
            match_margin: Some(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegionalResult {
    /// Interval forcing over `[0, T]`.
    pub forcing: Vec<Vec<f64>>,
    pub trajectory: Trajectory,
    pub phase1: NonlinearControl,
    /// Boundary control of the subdomain and its state.
    pub phase2: ControlResult,
    pub phase2_log: Vec<PicardStep>,
    pub phase2_converged: bool,
    pub l2p: f64,
    pub l2p_node: usize,
    pub mu: CutoffMu,
    pub split_level: usize,
    pub left_rel_error: f64,
    pub right_abs_error: f64,
    pub max_outside: f64,
    /// Largest discarded residual outside the cutoff band.
    pub gluing_error: f64,
    /// Identity defect of the phase-2 composite, see `identity_defect`.
    pub identity_error: f64,
    pub warnings: Vec<String>,
}

impl RegionalResult {
    pub fn converged(&self) -> bool {
        self.phase1.converged && self.phase2_converged
    }

    pub fn manifest(&self) -> BTreeMap<String, String> {
        let mesh = &self.trajectory.mesh;
        let mut m = BTreeMap::new();
        m.insert("phase1.levels".into(), format!("0..{}", self.split_level));
        m.insert("phase1.t".into(), format!("{:.16e}..{:.16e}", 0.0, mesh.time(self.split_level)));
        m.insert("phase2.levels".into(), format!("{}..{}", self.split_level, mesh.m));
        m.insert("phase2.t".into(), format!("{:.16e}..{:.16e}", mesh.time(self.split_level), mesh.t));
        m.insert("l2p".into(), format!("{:.16e}", self.l2p));
        m.insert("l2p_node".into(), self.l2p_node.to_string());
        m.insert("mu.l1p".into(), format!("{:.16e}", self.mu.l1p));
        m.insert("mu.end".into(), format!("{:.16e}", self.mu.end()));
        m.insert("mu.degree".into(), self.mu.degree().to_string());
        m
    }
}

fn phase_err(phase: &'static str) -> impl Fn(KdvError) -> KdvError {
    move |e| KdvError::Phase { phase, source: Box::new(e) }
}

/// Chooses the subdomain length: a grid node in `(l1p, l2)` away from the
/// critical set.
pub fn choose_l2p(mesh: &Mesh, cfg: &RegionalConfig) -> Result<(f64, usize)> {
    let set = critical_lengths(6)?;
    let l0 = cfg.l1p + cfg.l2p_fraction * (cfg.l2 - cfg.l1p);
    let l = nearest_noncritical(l0, &set, cfg.margin_fraction * mesh.l)?;
    let k = (l / mesh.h).round() as usize;
    let x = mesh.x(k);
    if !(x > cfg.l1p && x < cfg.l2) || set.distance(x) < 0.5 * cfg.margin_fraction * mesh.l {
        return Err(KdvError::Invalid(format!("no admissible l2' in ({}, {})", cfg.l1p, cfg.l2)));
    }
    Ok((x, k))
}

fn check_geometry(mesh: &Mesh, cfg: &RegionalConfig) -> Result<()> {
    if !(0.0 < cfg.l1 && cfg.l1 < cfg.l1p && cfg.l1p < cfg.l2 && cfg.l2 < mesh.l) {
        return Err(KdvError::Invalid(format!(
            "need 0 < l1 < l1p < l2 < L, got {}, {}, {}, {}",
            cfg.l1, cfg.l1p, cfg.l2, mesh.l
        )));
    }
    if mesh.m % 2 != 0 {
        return Err(KdvError::Invalid("regional control needs an even step count".into()));
    }
    Ok(())
}

/// Nodes strictly inside the forcing band of the cutoff, widened by the
/// stencil reach.
fn band_mask(mesh: &Mesh, mu: &CutoffMu) -> Vec<bool> {
    let lo = mu.l1p - 2.0 * mesh.h;
    let hi = mu.end() + 2.0 * mesh.h;
    mesh.nodes().iter().map(|x| *x > lo - 1e-12 && *x < hi + 1e-12).collect()
}

/// Phase 2: nonlinear boundary control of the subdomain by Picard on the
/// frozen potential `1 + y/2`.
fn subdomain_control(
    sub: &Mesh,
    target: &[f64],
    mask: Option<Vec<bool>>,
    cfg: &PicardConfig,
) -> Result<(ControlResult, Trajectory, Vec<PicardStep>, bool)> {
    let op = build_operator(sub, BcTag::SubdomainForward(sub.l))?;
    let mut y = vec![vec![0.0; sub.n]; sub.m + 1];
    let mut log = Vec::new();
    let mut converged = false;
    let mut last = None;
    for k in 1..=cfg.max_outer {
        let mut prob = ControlProblem::new(sub.clone(), Mode::BoundarySubdomain, vec![0.0; sub.n]);
        prob.u1 = Some(target.to_vec());
        prob.target_mask = mask.clone();
        prob.xi = Potential::Field { base: 1.0, values: y.iter().map(|v| v.iter().map(|x| 0.5 * x).collect()).collect() };
        prob.cg_tol = cfg.cg_tol;
        prob.cg_max = cfg.cg_max;
        prob.tikhonov_eps = cfg.tikhonov_eps;
        prob.delta = cfg.delta;
        let lin = synthesize_boundary_control(&prob)?;
        let ynew: Vec<Vec<f64>> = y
            .iter()
            .zip(&lin.trajectory.values)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (1.0 - cfg.damping) * p + cfg.damping * q).collect())
            .collect();
        let sq: Vec<f64> =
            ynew.iter().zip(&y).map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * sub.h).collect();
        let nrm: Vec<f64> = ynew.iter().map(|a| a.iter().map(|p| p * p).sum::<f64>() * sub.h).collect();
        let dist = time_trapezoid(&sq, sub.dt).sqrt();
        let scale = time_trapezoid(&nrm, sub.dt).sqrt().max(1.0);
        log.push(PicardStep { k, outer_dist: dist, terminal_residual: lin.terminal_residual, cg_iters: lin.cg_iters });
        y = ynew;
        last = Some(lin);
        if dist <= cfg.outer_tol * scale {
            converged = true;
            break;
        }
    }
    let lin = last.expect("at least one outer step");
    let run = solve_nonlinear(sub, &op, &vec![0.0; sub.n], &lin.control, cfg.inner)?;
    Ok((lin, run.trajectory, log, converged))
}

/// Steers `u0` so that `u(T) = u1` on `(0, l1p)` and `u(T) = 0` on `(l2, L)`
/// with a forcing supported in `(l1, l2)`.
pub fn regional_control(mesh: &Mesh, u0: &[f64], u1: &[f64], cfg: &RegionalConfig) -> Result<RegionalResult> {
    crate::error::check_len(u0, mesh.n)?;
    crate::error::check_len(u1, mesh.n)?;
    check_geometry(mesh, cfg)?;
    let mut warnings = Vec::new();
    for (name, v) in [("u0", u0), ("u1", u1)] {
        let nv = l2_norm(v, mesh.h);
        if nv > cfg.phase1.delta {
            warnings.push(format!("{name} norm {nv:.3e} exceeds delta {:.3e}", cfg.phase1.delta));
        }
    }
    let half = mesh.m / 2;
    let op = build_operator(mesh, BcTag::Forward)?;

    let w1 = mesh.time_window(0, half)?;
    let p1 = null_control_to_trajectory(&w1, &vec![0.0; mesh.n], u0, (cfg.l1, cfg.l2), &cfg.phase1)
        .map_err(phase_err("phase 1"))?;
    if !p1.converged {
        warnings.push("phase 1 Picard did not converge".into());
    }

    let (l2p, k2) = choose_l2p(mesh, cfg)?;
    let mu = CutoffMu::new(cfg.l1p, l2p)?;
    let w2 = mesh.time_window(half, mesh.m)?;
    let sub = w2.subdomain(k2)?;
    let target: Vec<f64> = (0..sub.n).map(|i| u1[i] * mu.eval(sub.x(i + 1))[0]).collect();
    let mask = cfg.match_margin.map(|d| sub.nodes().iter().map(|x| *x < cfg.l1p + d + 1e-12).collect());
    let (p2, y, log2, conv2) = subdomain_control(&sub, &target, mask, &cfg.phase2).map_err(phase_err("phase 2"))?;
    if !conv2 {
        warnings.push("phase 2 Picard did not converge".into());
    }

    let muv: Vec<f64> = mesh.nodes().iter().map(|x| mu.eval(*x)[0]).collect();
    let composite: Vec<Vec<f64>> = y
        .values
        .iter()
        .map(|yv| (0..mesh.n).map(|i| if i < sub.n { muv[i] * yv[i] } else { 0.0 }).collect())
        .collect();
    let mask = band_mask(mesh, &mu);
    let mut gluing = 0.0f64;
    let f2: Vec<Vec<f64>> = nonlinear_residual(&w2, &op, &composite)
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(&mask)
                .map(|(v, inside)| {
                    if *inside {
                        *v
                    } else {
                        gluing = gluing.max(v.abs());
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let identity_error = identity_defect(&w2, &y, &mu)?;
    let mut forcing = p1.result.control.to_distributed(&w1, &op);
    forcing.extend(f2);
    let run = solve_nonlinear(mesh, &op, u0, &Forcing::Distributed(forcing.clone()), cfg.phase1.inner)
        .map_err(phase_err("verification"))?;

    let ut = run.trajectory.terminal();
    let nodes = mesh.nodes();
    let pick = |pred: &dyn Fn(f64) -> bool, v: &dyn Fn(usize) -> f64| -> f64 {
        let s: f64 = (0..mesh.n).filter(|i| pred(nodes[*i])).map(|i| v(i) * v(i)).sum();
        (s * mesh.h).sqrt()
    };
    let left_err = pick(&|x| x < cfg.l1p, &|i| ut[i] - u1[i]);
    let left_ref = pick(&|x| x < cfg.l1p, &|i| u1[i]);
    let right_abs_error = pick(&|x| x > cfg.l2, &|i| ut[i]);
    let max_outside = forcing
        .iter()
        .flat_map(|r| r.iter().zip(&nodes).filter(|(_, x)| **x <= cfg.l1 || **x >= cfg.l2).map(|(v, _)| v.abs()))
        .fold(0.0, f64::max);

    Ok(RegionalResult {
        forcing,
        trajectory: run.trajectory,
        phase1: p1,
        phase2: p2,
        phase2_log: log2,
        phase2_converged: conv2,
        l2p,
        l2p_node: k2,
        mu,
        split_level: half,
        left_rel_error: if left_ref > 0.0 { left_err / left_ref } else { left_err },
        right_abs_error,
        max_outside,
        gluing_error: gluing,
        identity_error,
        warnings,
    })
}

/// Closed-form forcing of `u = mu y` for a subdomain state `y` solving the
/// free equation, on interval `k`:
/// `mu(mu-1) y y_x + mu''' y + 3 mu'' y_x + 3 mu' y_xx + mu' y + mu mu' y^2`.
pub fn formula_forcing(full: &Mesh, y: &Trajectory, mu: &CutoffMu, k: usize) -> Vec<f64> {
    let sub = &y.mesh;
    let th = sub.theta_mix(k, &y.values[k], &y.values[k + 1]);
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= sub.n {
            0.0
        } else {
            th[i as usize]
        }
    };
    let h = full.h;
    (0..full.n)
        .map(|i| {
            let x = full.x(i + 1);
            let [m0, m1, m2, m3] = mu.eval(x);
            if i >= sub.n || (m1 == 0.0 && m2 == 0.0 && m3 == 0.0 && (m0 == 0.0 || m0 == 1.0)) {
                return 0.0;
            }
            let j = i as isize;
            let yv = at(j);
            let yx = (at(j + 1) - at(j - 1)) / (2.0 * h);
            let yxx = (at(j + 1) - 2.0 * yv + at(j - 1)) / (h * h);
            m0 * (m0 - 1.0) * yv * yx + m3 * yv + 3.0 * m2 * yx + 3.0 * m1 * yxx + m1 * yv + m0 * m1 * yv * yv
        })
        .collect()
}

/// `L^2 L^2` norm of `N(mu y) - mu N_sub(y) - f(y)` with `N` the interval
/// residual of the nonlinear scheme and `f` the closed form of `formula_forcing`.  For a
/// discrete subdomain solution `N_sub(y)` vanishes away from `l2'`.
pub fn identity_defect(full: &Mesh, y: &Trajectory, mu: &CutoffMu) -> Result<f64> {
    let sub = &y.mesh;
    let op = build_operator(full, BcTag::Forward)?;
    let op_sub = build_operator(sub, BcTag::SubdomainForward(sub.l))?;
    let muv: Vec<f64> = full.nodes().iter().map(|x| mu.eval(*x)[0]).collect();
    let u: Vec<Vec<f64>> =
        y.values.iter().map(|yv| (0..full.n).map(|i| if i < sub.n { muv[i] * yv[i] } else { 0.0 }).collect()).collect();
    let r = nonlinear_residual(full, &op, &u);
    let rs = nonlinear_residual(sub, &op_sub, &y.values);
    let sq: Vec<f64> = (0..full.m)
        .map(|k| {
            let f = formula_forcing(full, y, mu, k);
            (0..full.n)
                .map(|i| {
                    let own = if i < sub.n { muv[i] * rs[k][i] } else { 0.0 };
                    (r[k][i] - own - f[i]).powi(2)
                })
                .sum::<f64>()
                * full.h
        })
        .collect();
    Ok((sq.iter().sum::<f64>() * full.dt).sqrt())
}

/// One level of the residual-forcing identity check.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityLevel {
    pub n: usize,
    pub m: usize,
    pub error: f64,
    /// `error / (h^2 + dt^2)`.
    pub constant: f64,
}

/// Identity defect for the smooth field `y = a e^{-t} (1 + x) sin^2(pi x / l2')`
/// on the regional geometry at mesh size `n`, `m`.
pub fn residual_identity_check(
    l: f64,
    t: f64,
    n: usize,
    m: usize,
    l1p: f64,
    l2p: f64,
    amplitude: f64,
) -> Result<IdentityLevel> {
    let full = Mesh::new(l, t, n, m)?;
    let k2 = (l2p / full.h).round() as usize;
    let sub = full.subdomain(k2)?;
    let mu = CutoffMu::new(l1p, sub.l)?;
    let op_sub = build_operator(&sub, BcTag::SubdomainForward(sub.l))?;
    let values = (0..=sub.m)
        .map(|j| {
            let e = amplitude * (-sub.time(j)).exp();
            sub.nodes().iter().map(|x| e * (1.0 + x) * (PI * x / sub.l).sin().powi(2)).collect()
        })
        .collect();
    let y = Trajectory::new(sub, &op_sub, values);
    let error = identity_defect(&full, &y, &mu)?;
    Ok(IdentityLevel { n, m, error, constant: error / (full.h * full.h + full.dt * full.dt) })
}

/// Smallest boundary-Gramian Ritz value at one domain length.
#[derive(Clone, Debug, PartialEq)]
pub struct RitzPoint {
    pub l: f64,
    pub ritz_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalScan {
    pub grid: Vec<RitzPoint>,
    /// Local minimizer of `ln ritz_min` near the smallest grid value.
    pub dip: RitzPoint,
    pub left: RitzPoint,
    pub right: RitzPoint,
    /// `min(left, right) / dip`.
    pub depth: f64,
}

pub fn boundary_min_ritz(l: f64, t: f64, n: usize, m: usize) -> Result<f64> {
    let mesh = Mesh::new(l, t, n, m)?;
    Ok(boundary_gramian_ritz(&mesh, 8, 30)?.subspace_min)
}

/// Evaluates the boundary min Ritz value on `ls`, refines the smallest grid
/// value by golden-section search over its neighbouring cells, and compares
/// the refined dip against the values `offset` to either side.
pub fn critical_scan(ls: &[f64], t: f64, n: usize, m: usize, offset: f64) -> Result<CriticalScan> {
    if ls.len() < 3 {
        return Err(KdvError::Invalid("critical scan needs at least three lengths".into()));
    }
    let eval = |l: f64| boundary_min_ritz(l, t, n, m);
    let grid = ls
        .par_iter()
        .map(|&l| eval(l).map(|r| RitzPoint { l, ritz_min: r }))
        .collect::<Result<Vec<_>>>()?;
    let k = (0..grid.len())
        .min_by(|a, b| grid[*a].ritz_min.total_cmp(&grid[*b].ritz_min))
        .expect("nonempty grid");
    let (mut a, mut b) = (grid[k.saturating_sub(1)].l, grid[(k + 1).min(grid.len() - 1)].l);
    let score = |l: f64| eval(l).map(|r| r.max(f64::MIN_POSITIVE).ln());
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (score(c)?, score(d)?);
    for _ in 0..40 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = score(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = score(d)?;
        }
    }
    let l = 0.5 * (a + b);
    let dip = RitzPoint { l, ritz_min: eval(l)? };
    let left = RitzPoint { l: l - offset, ritz_min: eval(l - offset)? };
    let right = RitzPoint { l: l + offset, ritz_min: eval(l + offset)? };
    let depth = left.ritz_min.min(right.ritz_min) / dip.ritz_min;
    Ok(CriticalScan { grid, dip, left, right, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep11_endpoints() {
        let mu = CutoffMu::new(0.5, 0.9).unwrap();
        let a = mu.eval(0.5 + 1e-9);
        let b = mu.eval(0.7 - 1e-9);
        assert!((a[0] - 1.0).abs() < 1e-12 && b[0].abs() < 1e-12);
        assert!(a[1].abs() < 1e-9 && b[3].abs() < 1e-6);
        let m = mu.eval(0.6);
        assert!((m[0] - 0.5).abs() < 1e-12);
    }
}
