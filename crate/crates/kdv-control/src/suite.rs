//! Self-test suite: twelve numbered checks at desk scale (`n = 128`,
//! `m = 256` unless a check says otherwise).  Criterion 12 (determinism of
//! the report itself) is checked by running the suite twice, outside this
//! module.

use crate::carleman::{carleman_ratio_d60, construct_psi, newcarl_sides, observability_ratio_o24, CarlemanWeight};
use crate::error::Result;
use crate::hum::{
    gramian_algebra, synthesize_null_control, ControlProblem, Gramian, Mode,
};
use crate::kdv_solve::{dissipation_report, solve_adjoint, solve_forward, solve_nonlinear, Forcing, InnerConfig, Potential};
use crate::mesh::{build_operator, BcTag, Mesh};
use crate::nonlinear_ctrl::{exact_control_nonlinear, null_control_to_trajectory, PicardConfig};
use crate::regional::{
    critical_scan, boundary_min_ritz, regional_control, residual_identity_check, uncontrollable_mode_residual,
    RegionalConfig,
};
use crate::rng::CounterRng;
use crate::weights::{l2_norm, sine_corpus, time_trapezoid, verify_hardy_p1, verify_hardy_p2p, verify_q1_and_poi, weighted_corpus};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

pub const N: usize = 128;
pub const M: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    /// `key=value` pairs; never contains timings, so reports are reproducible.
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {}: {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

const NAMES: [&str; 11] = [
    "solver convergence",
    "dissipation",
    "weighted inequalities",
    "psi construction",
    "carleman and observability",
    "linear null control",
    "nonlinear null control to trajectory",
    "weighted exact control",
    "regional control",
    "critical length",
    "gramian algebra",
];

fn e(x: f64) -> String {
    format!("{x:.6e}")
}

/// Runs checks 1 to 11 concurrently; the output order is by id.
pub fn run_suite(seed: u64) -> Vec<Outcome> {
    (1u8..=11).into_par_iter().map(|id| run_criterion(id, seed)).collect()
}

pub fn run_criterion(id: u8, seed: u64) -> Outcome {
    let body = match id {
        1 => c1_convergence(),
        2 => c2_dissipation(),
        3 => c3_inequalities(seed),
        4 => c4_psi(seed),
        5 => c5_carleman(seed),
        6 => c6_null_control(seed),
        7 => c7_trajectory(),
        8 => c8_weighted(),
        9 => c9_regional(),
        10 => c10_critical(),
        11 => c11_algebra(seed),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (pass, detail) = body.unwrap_or_else(|err| (false, format!("error={err}")));
    Outcome { id, name: NAMES.get(id as usize - 1).copied().unwrap_or("unknown"), pass, detail }
}

pub fn render(outcomes: &[Outcome], seed: u64) -> String {
    let mut s = format!("seed = {seed}\n");
    for o in outcomes {
        s.push_str(&o.line());
        s.push('\n');
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    s.push_str(&format!("passed = {passed}/{}\n", outcomes.len()));
    s
}

/// `u* = e^{-t} x^2 (L-x)^2` and the forcing that makes it an exact solution
/// of the linear (`nonlinear = false`) or nonlinear equation.
pub fn manufactured(l: f64, t: f64, x: f64, nonlinear: bool) -> (f64, f64) {
    let p = x.powi(4) - 2.0 * l * x.powi(3) + l * l * x * x;
    let dp = 4.0 * x.powi(3) - 6.0 * l * x * x + 2.0 * l * l * x;
    let d3p = 24.0 * x - 12.0 * l;
    let et = (-t).exp();
    let mut f = et * (-p + dp + d3p);
    if nonlinear {
        f += et * et * p * dp;
    }
    (et * p, f)
}

/// `L^2(0,T; L^2)` error of the manufactured run on one mesh.
pub fn manufactured_error(mesh: &Mesh, nonlinear: bool) -> Result<f64> {
    let op = build_operator(mesh, BcTag::Forward)?;
    let nodes = mesh.nodes();
    let field = |t: f64, k: usize| -> Vec<f64> {
        nodes.iter().map(|&x| {
            let v = manufactured(mesh.l, t, x, nonlinear);
            if k == 0 { v.0 } else { v.1 }
        }).collect()
    };
    let forcing: Vec<Vec<f64>> =
        (0..mesh.m).map(|k| mesh.theta_mix(k, &field(mesh.time(k), 1), &field(mesh.time(k + 1), 1))).collect();
    let u0 = field(0.0, 0);
    let traj = if nonlinear {
        solve_nonlinear(mesh, &op, &u0, &Forcing::Distributed(forcing), InnerConfig { tol: 1e-13, max_iter: 50 })?
            .trajectory
    } else {
        solve_forward(mesh, &op, &u0, &Forcing::Distributed(forcing), &Potential::Const(1.0))?
    };
    let sq: Vec<f64> = (0..=mesh.m)
        .map(|j| {
            let exact = field(mesh.time(j), 0);
            let d: Vec<f64> = traj.values[j].iter().zip(&exact).map(|(a, b)| a - b).collect();
            l2_norm(&d, mesh.h).powi(2)
        })
        .collect();
    Ok(time_trapezoid(&sq, mesh.dt).sqrt())
}

const LEVELS: [(usize, usize); 4] = [(15, 32), (31, 64), (63, 128), (127, 256)];

fn c1_convergence() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (tag, nonlinear) in [("linear", false), ("nonlinear", true)] {
        let errs = LEVELS
            .iter()
            .map(|&(n, m)| manufactured_error(&Mesh::new(1.0, 1.0, n, m)?, nonlinear))
            .collect::<Result<Vec<_>>>()?;
        let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
        pass &= ratios.iter().all(|r| (3.0..=5.0).contains(r));
        parts.push(format!(
            "{tag}.err_finest={} {tag}.ratios=[{}]",
            e(errs[errs.len() - 1]),
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(",")
        ));
    }
    Ok((pass, parts.join(" ")))
}

fn c2_dissipation() -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let op = build_operator(&mesh, BcTag::Forward)?;
    let u0: Vec<f64> = mesh.nodes().iter().map(|x| (PI * x).sin() * x * (1.0 - x)).collect();
    let traj = solve_forward(&mesh, &op, &u0, &Forcing::Zero, &Potential::Const(1.0))?;
    let r = dissipation_report(&traj);
    let pass = r.max_growth <= 1e-8 && r.ratio_min >= 0.5 && r.ratio_max <= 2.0 && r.steps_checked > 0;
    Ok((
        pass,
        format!(
            "max_growth={} ratio_min={:.4} ratio_max={:.4} steps={} cumulative={:.4}",
            e(r.max_growth),
            r.ratio_min,
            r.ratio_max,
            r.steps_checked,
            r.cumulative_ratio
        ),
    ))
}

fn c3_inequalities(seed: u64) -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let p1 = verify_hardy_p1(&weighted_corpus(&mesh, 200, 8, seed, 31), &mesh);
    let sines = sine_corpus(&mesh, 200, 8, seed, 32);
    let poi = verify_q1_and_poi(&sines, &mesh);
    let p2p = verify_hardy_p2p(&sines, &mesh);
    let counted = |r: &crate::weights::InequalityReport| r.samples + r.skipped == 200 && r.samples > 0;
    let pass = [&p1, &poi.poi, &p2p].iter().all(|r| r.violations == 0 && counted(r));
    Ok((
        pass,
        format!(
            "p1.max={:.4} p1.viol={} poi.max={:.4} poi.viol={} p2p.max={:.4} p2p.viol={} q1={:.4}",
            p1.max_ratio, p1.violations, poi.poi.max_ratio, poi.poi.violations, p2p.max_ratio, p2p.violations, poi.q1_constant
        ),
    ))
}

/// Seeded `(L, l1, l2)` with `0 < l1 < l2 < L`.
pub fn psi_triples(seed: u64, count: usize) -> Vec<(f64, f64, f64)> {
    let mut rng = CounterRng::new(seed, 41);
    (0..count)
        .map(|_| {
            let l = rng.range(0.5, 8.0);
            let l1 = l * rng.range(0.1, 0.5);
            let l2 = l1 + (0.9 * l - l1) * rng.range(0.2, 0.9);
            (l, l1, l2)
        })
        .collect()
}

fn c4_psi(seed: u64) -> Result<(bool, String)> {
    let triples = psi_triples(seed, 20);
    let (mut built, mut violations, mut failures) = (0, 0, Vec::new());
    for (l, l1, l2) in &triples {
        match construct_psi(*l, *l1, *l2) {
            Ok(psi) => {
                built += 1;
                violations += psi.sample(10_000).total();
            }
            Err(_) => failures.push(format!("({l:.3},{l1:.3},{l2:.3})")),
        }
    }
    let mut detail = format!("built={built}/20 violations={violations}");
    if !failures.is_empty() {
        detail.push_str(&format!(" failed={}", failures.join(",")));
    }
    Ok((built == 20 && violations == 0, detail))
}

pub const S0: f64 = 1.0;
pub const OMEGA: (f64, f64) = (0.3, 0.6);

/// Largest observability ratio over `count` seeded adjoint runs with `xi = 0`.
pub fn empirical_c_star(mesh: &Mesh, omega: (f64, f64), count: usize, seed: u64) -> Result<f64> {
    let op = build_operator(mesh, BcTag::Forward)?;
    let corpus = sine_corpus(mesh, count, 8, seed, 51);
    corpus.iter().try_fold(0.0f64, |acc, vt| {
        let v = solve_adjoint(mesh, &op, vt, &Potential::Zero, &Forcing::Zero)?;
        Ok(acc.max(observability_ratio_o24(&v, omega).0))
    })
}

fn c5_carleman(seed: u64) -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let op = build_operator(&mesh, BcTag::Forward)?;
    // the weight lives on the reflected geometry, where omega sits at (L-0.6, L-0.3)
    let psi = construct_psi(1.0, 1.0 - OMEGA.1, 1.0 - OMEGA.0)?;
    let corpus = sine_corpus(&mesh, 50, 8, seed, 51);
    let scales = [S0, 2.0 * S0, 4.0 * S0];
    let mut d60 = [0.0f64; 3];
    let mut nc = [0.0f64; 3];
    let mut finite = true;
    let mut c_star = 0.0f64;
    for vt in &corpus {
        let v = solve_adjoint(&mesh, &op, vt, &Potential::Zero, &Forcing::Zero)?;
        let (o, degenerate) = observability_ratio_o24(&v, OMEGA);
        finite &= o.is_finite() && !degenerate;
        c_star = c_star.max(o);
        for (i, s) in scales.iter().enumerate() {
            let w = CarlemanWeight::new(psi.clone(), *s, mesh.t);
            let a = carleman_ratio_d60(&v, &w, OMEGA).ratio;
            let b = newcarl_sides(&v, &w, OMEGA).ratio;
            finite &= a.is_finite() && b.is_finite();
            d60[i] = d60[i].max(a);
            nc[i] = nc[i].max(b);
        }
    }
    let pass = finite && d60[2] <= 2.0 * d60[0] && nc[2] <= 2.0 * nc[0];
    Ok((
        pass,
        format!(
            "s0={S0} d60=[{},{},{}] newcarl=[{},{},{}] c_star={}",
            e(d60[0]),
            e(d60[1]),
            e(d60[2]),
            e(nc[0]),
            e(nc[1]),
            e(nc[2]),
            e(c_star)
        ),
    ))
}

fn c6_null_control(seed: u64) -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let u0: Vec<f64> = mesh.nodes().iter().map(|x| (PI * x).sin()).collect();
    let mut prob = ControlProblem::new(mesh.clone(), Mode::DistributedNull, u0.clone());
    prob.omega = OMEGA;
    prob.tikhonov_eps = 1e-8;
    let r = synthesize_null_control(&prob)?;
    let corpus_c = empirical_c_star(&mesh, OMEGA, 50, seed)?;
    // the HUM datum is the adjoint sample that the cost bound is sharp on
    let op = build_operator(&mesh, BcTag::Forward)?;
    let v = solve_adjoint(&mesh, &op, &r.adjoint_datum, &Potential::Zero, &Forcing::Zero)?;
    let c_star = corpus_c.max(observability_ratio_o24(&v, OMEGA).0);
    let n0 = l2_norm(&u0, mesh.h);
    let bound = 2.0 * c_star * n0 * n0;
    let pass = r.terminal_residual <= 1e-3 * n0 && r.cg_iters <= 500 && r.converged && r.cost <= bound;
    Ok((
        pass,
        format!(
            "residual={} rel={} cg_iters={} cost={} bound={} c_star={} corpus_c_star={}",
            e(r.terminal_residual),
            e(r.relative_residual),
            r.cg_iters,
            e(r.cost),
            e(bound),
            e(c_star),
            e(corpus_c)
        ),
    ))
}

fn c7_trajectory() -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let shape: Vec<f64> = mesh.nodes().iter().map(|x| (PI * x).sin()).collect();
    let unit = l2_norm(&shape, mesh.h);
    let cfg = PicardConfig::default();
    let zero = vec![0.0; mesh.n];
    let run = |amp: f64| {
        let u0: Vec<f64> = shape.iter().map(|v| amp * v / unit).collect();
        null_control_to_trajectory(&mesh, &zero, &u0, OMEGA, &cfg)
    };
    let full = run(1e-2)?;
    let half = run(5e-3)?;
    let (r1, r2) = (full.result.terminal_residual, half.result.terminal_residual);
    let a = full.converged && full.outer_iters() <= 20;
    let b = r1 <= 1e-3 * 1e-2;
    let c = r2 <= 0.5 * r1;
    Ok((
        a && b && c,
        format!(
            "outer={} converged={} residual={} halved_residual={} halving_ratio={:.6} (a={} b={} c={})",
            full.outer_iters(),
            full.converged,
            e(r1),
            e(r2),
            r1 / r2,
            ok(a),
            ok(b),
            ok(c)
        ),
    ))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}

fn c8_weighted() -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let nu = 0.25 * mesh.l;
    let u1: Vec<f64> = mesh.nodes().iter().map(|x| 1e-2 * x * (1.0 - x).powi(2)).collect();
    let out = exact_control_nonlinear(&mesh, &vec![0.0; mesh.n], &u1, nu, &PicardConfig::default())?;
    let r = &out.result;
    let op = build_operator(&mesh, BcTag::Forward)?;
    let f = r.control.to_distributed(&mesh, &op);
    let nodes = mesh.nodes();
    let leak = f
        .iter()
        .flat_map(|row| row.iter().zip(&nodes).filter(|(_, x)| **x < mesh.l - nu).map(|(v, _)| v.abs()))
        .fold(0.0, f64::max);
    let cert = r.certificate.get("h_weighted_tmt").copied().unwrap_or(f64::NAN);
    let pass = r.relative_residual <= 1e-2 && leak == 0.0 && cert.is_finite() && out.converged;
    Ok((
        pass,
        format!(
            "rel_residual={} outer={} leak={} h_weighted_tmt={}",
            e(r.relative_residual),
            out.outer_iters(),
            e(leak),
            e(cert)
        ),
    ))
}

fn c9_regional() -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 2.0, N, M)?;
    let nodes = mesh.nodes();
    let u0: Vec<f64> = nodes.iter().map(|x| 1e-2 * (PI * x).sin()).collect();
    let u1: Vec<f64> = nodes.iter().map(|x| 1e-2 * (2.0 * PI * x).sin()).collect();
    let cfg = RegionalConfig::new(0.4, 0.9, 0.5);
    let r = regional_control(&mesh, &u0, &u1, &cfg)?;
    let levels = [(64, 128), (128, 256), (256, 512)]
        .iter()
        .map(|&(n, m)| residual_identity_check(1.0, 2.0, n, m, cfg.l1p, r.l2p, 1e-2))
        .collect::<Result<Vec<_>>>()?;
    let cs: Vec<f64> = levels.iter().map(|l| l.constant).collect();
    let spread = cs.iter().cloned().fold(0.0, f64::max) / cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = r.left_rel_error <= 1e-2 && r.right_abs_error <= 1e-3 && r.max_outside <= 1e-12 && spread <= 1.5;
    Ok((
        pass,
        format!(
            "left_rel={} right_abs={} max_outside={} l2p={:.6} identity_c=[{}] c_spread={:.4}",
            e(r.left_rel_error),
            e(r.right_abs_error),
            e(r.max_outside),
            r.l2p,
            cs.iter().map(|c| e(*c)).collect::<Vec<_>>().join(","),
            spread
        ),
    ))
}

/// Grid of the L-scan: `[5.8, 6.8]` in steps of `0.05`.
pub fn l_scan_grid() -> Vec<f64> {
    (0..=20).map(|k| 5.8 + 0.05 * k as f64).collect()
}

fn c10_critical() -> Result<(bool, String)> {
    let tau = 2.0 * PI;
    let coarse = uncontrollable_mode_residual(&Mesh::new(tau, 1.0, N, M)?);
    let fine = uncontrollable_mode_residual(&Mesh::new(tau, 1.0, 2 * N + 1, M)?);
    let ratio = coarse.interior / fine.interior;
    let mode_ok = coarse.interior <= 1e-3 && (3.5..=4.5).contains(&ratio) && coarse.boundary_max() <= 1e-12;
    let at = boundary_min_ritz(tau, 1.0, N, M)?;
    let lo = boundary_min_ritz(tau - 0.3, 1.0, N, M)?;
    let hi = boundary_min_ritz(tau + 0.3, 1.0, N, M)?;
    let dip = lo.min(hi) / at;
    let clock = Instant::now();
    let scan = critical_scan(&l_scan_grid(), 1.0, N, M, 0.3)?;
    let in_time = clock.elapsed().as_secs_f64() <= 300.0;
    let located = (scan.dip.l - tau).abs() <= 0.05;
    let pass = mode_ok && dip >= 100.0 && scan.depth >= 100.0 && located && in_time;
    Ok((
        pass,
        format!(
            "mode_residual={} halving_ratio={:.4} ritz_2pi={} ritz_minus={} ritz_plus={} dip={} scan_dip_l={:.5} scan_depth={} within_5min={}",
            e(coarse.interior),
            ratio,
            e(at),
            e(lo),
            e(hi),
            e(dip),
            scan.dip.l,
            e(scan.depth),
            in_time
        ),
    ))
}

fn c11_algebra(seed: u64) -> Result<(bool, String)> {
    let mesh = Mesh::new(1.0, 1.0, N, M)?;
    let scale = mesh.h * mesh.h + mesh.dt * mesh.dt;
    let mut pass = true;
    let mut parts = Vec::new();
    for (j, mode) in [Mode::DistributedNull, Mode::WeightedExact, Mode::BoundarySubdomain].into_iter().enumerate() {
        let prob = ControlProblem::new(mesh.clone(), mode, vec![0.0; mesh.n]);
        let g = Gramian::new(&prob)?;
        let a = sine_corpus(&mesh, 20, 8, seed, 61 + 2 * j as u64);
        let b = sine_corpus(&mesh, 20, 8, seed, 62 + 2 * j as u64);
        let (mut asym, mut quad_min, mut gap) = (0.0f64, f64::INFINITY, 0.0f64);
        for (x, y) in a.iter().zip(&b) {
            let c = gramian_algebra(&g, x, y)?;
            asym = asym.max(c.asymmetry);
            quad_min = quad_min.min(c.quad_a / g.inner(x, x));
            gap = gap.max(c.duality_gap);
        }
        pass &= asym <= 1e-8 && quad_min >= 0.0 && gap <= scale;
        parts.push(format!(
            "{}: asym={} quad_min={} duality_c={}",
            mode.name(),
            e(asym),
            e(quad_min),
            e(gap / scale)
        ));
    }
    Ok((pass, parts.join("; ")))
}
