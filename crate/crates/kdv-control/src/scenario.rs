//! Batch scenarios: config validation, dispatch by mode, CSV artifacts and
//! `report.txt`.

use crate::carleman::{
    carleman_ratio_d60, construct_psi, newcarl_exponent, newcarl_sides, observability_ratio_o24, weight_lower_bound,
    CarlemanWeight,
};
use crate::config::RawConfig;
use crate::error::{KdvError, Result};
use crate::hum::{synthesize_null_control, synthesize_weighted_exact_control, ControlProblem, ControlResult, Mode};
use crate::kdv_solve::{solve_adjoint, solve_forward, solve_nonlinear, Forcing, InnerConfig, Potential, Trajectory};
use crate::mesh::{build_operator, BcTag, Mesh};
use crate::nonlinear_ctrl::{exact_control_nonlinear, null_control_to_trajectory, PicardConfig, PicardStep};
use crate::regional::{critical_scan, regional_control, uncontrollable_mode_residual, RegionalConfig};
use crate::weights::{
    coercivity_threshold_check, hardy_p1_ratio, hardy_p2p_ratio, l2_norm, poi_sides, sine_corpus, verify_hardy_p1,
    verify_hardy_p2p, verify_q1_and_poi, weighted_corpus,
};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioMode {
    Simulate,
    NullControl,
    NullToTrajectory,
    ExactWeighted,
    Regional,
    CarlemanCheck,
    ObservabilityScan,
    HardySuite,
    CriticalScan,
}

const ALL_MODES: [ScenarioMode; 9] = [
    ScenarioMode::Simulate,
    ScenarioMode::NullControl,
    ScenarioMode::NullToTrajectory,
    ScenarioMode::ExactWeighted,
    ScenarioMode::Regional,
    ScenarioMode::CarlemanCheck,
    ScenarioMode::ObservabilityScan,
    ScenarioMode::HardySuite,
    ScenarioMode::CriticalScan,
];

const COMMON: [&str; 7] = ["name", "mode", "seed", "mesh.L", "mesh.T", "mesh.n", "mesh.m"];
const PROFILE_FIELDS: [&str; 5] = ["profile", "amplitude", "k", "center", "width"];
const HUM_KEYS: [&str; 3] = ["hum.eps", "hum.cg_tol", "hum.cg_max"];
const PICARD_KEYS: [&str; 6] =
    ["picard.max_outer", "picard.outer_tol", "picard.damping", "picard.ball_radius", "picard.inner_tol", "picard.inner_max"];

impl ScenarioMode {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioMode::Simulate => "simulate",
            ScenarioMode::NullControl => "null-control",
            ScenarioMode::NullToTrajectory => "null-to-trajectory",
            ScenarioMode::ExactWeighted => "exact-weighted",
            ScenarioMode::Regional => "regional",
            ScenarioMode::CarlemanCheck => "carleman-check",
            ScenarioMode::ObservabilityScan => "observability-scan",
            ScenarioMode::HardySuite => "hardy-suite",
            ScenarioMode::CriticalScan => "critical-scan",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioMode> {
        ALL_MODES.into_iter().find(|m| m.name() == s)
    }

    /// Profiles the mode reads, and whether each is required.
    fn profiles(self) -> &'static [(&'static str, bool)] {
        match self {
            ScenarioMode::Simulate | ScenarioMode::NullControl => &[("u0", true)],
            ScenarioMode::NullToTrajectory => &[("u0", true), ("ubar", false)],
            ScenarioMode::ExactWeighted | ScenarioMode::Regional => &[("u0", false), ("u1", true)],
            _ => &[],
        }
    }

    fn extra_keys(self) -> Vec<&'static str> {
        let mut v: Vec<&'static str> = match self {
            ScenarioMode::Simulate => vec!["solver.nonlinear", "solver.xi", "solver.inner_tol", "solver.inner_max"],
            ScenarioMode::NullControl => vec!["control.omega_lo", "control.omega_hi", "control.xi"],
            ScenarioMode::NullToTrajectory => vec!["control.omega_lo", "control.omega_hi"],
            ScenarioMode::ExactWeighted => vec!["control.nu", "control.nonlinear"],
            ScenarioMode::Regional => vec![
                "regional.l1",
                "regional.l2",
                "regional.l1p",
                "regional.l2p_fraction",
                "regional.margin_fraction",
                "regional.match_margin",
            ],
            ScenarioMode::CarlemanCheck => {
                vec!["carleman.omega_lo", "carleman.omega_hi", "carleman.s", "carleman.samples", "carleman.kmax"]
            }
            ScenarioMode::ObservabilityScan => {
                vec!["observe.omega_lo", "observe.omega_hi", "observe.samples", "observe.kmax", "observe.xi"]
            }
            ScenarioMode::HardySuite => vec!["hardy.samples", "hardy.kmax"],
            ScenarioMode::CriticalScan => {
                vec!["critical.l_min", "critical.l_max", "critical.l_step", "critical.offset"]
            }
        };
        if matches!(self, ScenarioMode::NullControl | ScenarioMode::NullToTrajectory | ScenarioMode::ExactWeighted | ScenarioMode::Regional) {
            v.extend(HUM_KEYS);
        }
        if matches!(self, ScenarioMode::NullToTrajectory | ScenarioMode::ExactWeighted | ScenarioMode::Regional) {
            v.extend(PICARD_KEYS);
        }
        v
    }

    /// Every key a config of this mode may set.
    pub fn allowed_keys(self) -> Vec<String> {
        let mut v: Vec<String> = COMMON.iter().chain(&self.extra_keys()).map(|s| s.to_string()).collect();
        for (p, _) in self.profiles() {
            v.push(p.to_string());
            v.extend(PROFILE_FIELDS.iter().map(|f| format!("{p}.{f}")));
        }
        v
    }

    fn required(self) -> Vec<&'static str> {
        match self {
            ScenarioMode::Regional => vec!["regional.l1", "regional.l2", "regional.l1p"],
            _ => Vec::new(),
        }
    }
}

/// Validates `cfg` against the schema of its mode.
pub fn validate(cfg: &RawConfig) -> Result<ScenarioMode> {
    let mode_name = cfg.get("mode").ok_or_else(|| KdvError::MissingKeys(vec!["mode".into()]))?;
    let mode = ScenarioMode::parse(mode_name).ok_or_else(|| KdvError::Config {
        line: cfg.entries["mode"].line,
        msg: format!(
            "unknown mode '{mode_name}' (expected one of {})",
            ALL_MODES.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
        ),
    })?;
    let allowed = mode.allowed_keys();
    let allowed: Vec<&str> = allowed.iter().map(|s| s.as_str()).collect();
    let mut required: Vec<&str> = COMMON[1..].iter().filter(|k| **k != "seed").copied().collect();
    required.extend(mode.required());
    let mut missing = match cfg.check(&allowed, &required) {
        Ok(()) => Vec::new(),
        Err(KdvError::MissingKeys(v)) => v,
        Err(e) => return Err(e),
    };
    for (p, req) in mode.profiles() {
        if *req && cfg.get(p).is_none() && cfg.get(&format!("{p}.profile")).is_none() {
            missing.push(format!("{p}.profile"));
        }
    }
    if !missing.is_empty() {
        return Err(KdvError::MissingKeys(missing));
    }
    cfg.u64_or("seed", 0)?;
    mesh_of(cfg)?;
    Ok(mode)
}

/// Result of one scenario run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub mode: ScenarioMode,
    /// False when an iteration stopped without meeting its tolerance.
    pub converged: bool,
    /// Report entries (without the scenario echo).
    pub summary: BTreeMap<String, String>,
}

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Nodal samples of a named profile or of a CSV file.
pub fn profile(cfg: &RawConfig, prefix: &str, mesh: &Mesh, base: &Path) -> Result<Vec<f64>> {
    let name = cfg
        .get(&format!("{prefix}.profile"))
        .or_else(|| cfg.get(prefix))
        .unwrap_or("zero")
        .to_string();
    let amp = cfg.f64_or(&format!("{prefix}.amplitude"), 1.0)?;
    let k = cfg.f64_or(&format!("{prefix}.k"), 1.0)?;
    let center = cfg.f64_or(&format!("{prefix}.center"), 0.5 * mesh.l)?;
    let width = cfg.f64_or(&format!("{prefix}.width"), 0.25 * mesh.l)?;
    let l = mesh.l;
    let shape: Box<dyn Fn(f64) -> f64> = match name.as_str() {
        "zero" => Box::new(|_| 0.0),
        "sin" => Box::new(move |x| (k * PI * x / l).sin()),
        "poly" => Box::new(move |x| x * (l - x) * (l - x)),
        "bump" => {
            if !(width > 0.0) {
                return Err(KdvError::Invalid(format!("{prefix}.width must be positive")));
            }
            Box::new(move |x| {
                let r = (x - center) / width;
                if r.abs() < 1.0 {
                    (1.0 - r * r).powi(4)
                } else {
                    0.0
                }
            })
        }
        path => return read_profile_csv(&base.join(path), mesh, amp),
    };
    Ok(mesh.nodes().iter().map(|x| amp * shape(*x)).collect())
}

/// Reads the last column of a CSV file: either `n` interior values or
/// `n + 2` values including both endpoints.
fn read_profile_csv(path: &Path, mesh: &Mesh, amp: f64) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| KdvError::Invalid(format!("cannot read profile {}: {e}", path.display())))?;
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| KdvError::Invalid(format!("{}: {e}", path.display())))?;
        let Some(last) = rec.iter().last() else { continue };
        match last.trim().parse::<f64>() {
            Ok(v) => vals.push(amp * v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(KdvError::Invalid(format!("{}: row {} is not numeric", path.display(), i + 1))),
        }
    }
    if vals.len() == mesh.n + 2 {
        vals = vals[1..=mesh.n].to_vec();
    }
    if vals.len() != mesh.n {
        return Err(KdvError::Invalid(format!(
            "profile {} has {} values, mesh needs {} (or {} with endpoints)",
            path.display(),
            vals.len(),
            mesh.n,
            mesh.n + 2
        )));
    }
    Ok(vals)
}

fn csv_err(e: csv::Error) -> KdvError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => KdvError::Io(io),
        other => KdvError::Invalid(format!("csv: {other:?}")),
    }
}

/// Writes a numeric table with 17 significant digits.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a table of preformatted fields.
pub fn write_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    let mesh = &traj.mesh;
    let nodes = mesh.nodes();
    let rows = traj
        .values
        .iter()
        .enumerate()
        .flat_map(|(j, u)| nodes.iter().zip(u).map(move |(x, v)| vec![mesh.time(j), *x, *v]).collect::<Vec<_>>());
    write_table(&dir.join("trajectory.csv"), &["t", "x", "u"], rows)?;
    let traces =
        (0..=mesh.m).map(|j| vec![mesh.time(j), traj.left_trace[j], traj.right_trace[j]]);
    write_table(&dir.join("traces.csv"), &["t", "ux0", "uxL"], traces)
}

fn midpoint(mesh: &Mesh, k: usize) -> f64 {
    0.5 * (mesh.time(k) + mesh.time(k + 1))
}

/// Interval forcing at interval midpoints, as `t,x,f` rows.
pub fn write_distributed(path: &Path, mesh: &Mesh, f: &[Vec<f64>], j0: usize) -> Result<()> {
    let nodes = mesh.nodes();
    let rows = f
        .iter()
        .enumerate()
        .flat_map(|(k, row)| nodes.iter().zip(row).map(move |(x, v)| vec![midpoint(mesh, j0 + k), *x, *v]).collect::<Vec<_>>());
    write_table(path, &["t", "x", "f"], rows)
}

pub fn write_control(dir: &Path, mesh: &Mesh, control: &Forcing) -> Result<()> {
    let path = dir.join("control.csv");
    match control {
        Forcing::Boundary(g) => {
            write_table(&path, &["t", "h"], g.iter().enumerate().map(|(k, v)| vec![midpoint(mesh, k), *v]))
        }
        other => {
            let op = build_operator(mesh, BcTag::Forward)?;
            write_distributed(&path, mesh, &other.to_distributed(mesh, &op), 0)
        }
    }
}

pub fn write_picard_log(path: &Path, log: &[PicardStep]) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|s| vec![s.k.to_string(), fmt(s.outer_dist), fmt(s.terminal_residual), s.cg_iters.to_string()])
        .collect();
    let header: Vec<String> = ["k", "outer_dist", "terminal_residual", "cg_iters"].iter().map(|s| s.to_string()).collect();
    write_records(path, &header, &rows)
}

struct Report {
    map: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Report { map: BTreeMap::new(), warnings: Vec::new() }
    }

    fn num(&mut self, k: &str, v: f64) {
        self.map.insert(k.to_string(), fmt(v));
    }

    fn int(&mut self, k: &str, v: usize) {
        self.map.insert(k.to_string(), v.to_string());
    }

    fn text(&mut self, k: &str, v: impl Into<String>) {
        self.map.insert(k.to_string(), v.into());
    }

    fn control(&mut self, r: &ControlResult) {
        self.num("terminal_residual", r.terminal_residual);
        self.num("relative_residual", r.relative_residual);
        self.int("cg_iters", r.cg_iters);
        self.text("cg_converged", r.converged.to_string());
        self.num("cost", r.cost);
        self.num("gramian_quadform", r.gramian_quadform);
        self.num("ritz_min", r.ritz_min);
        self.num("ritz_max", r.ritz_max);
        for (k, v) in &r.certificate {
            self.num(&format!("cert.{k}"), *v);
        }
        self.warnings.extend(r.warnings.iter().cloned());
    }
}

fn mesh_of(cfg: &RawConfig) -> Result<Mesh> {
    Mesh::new(cfg.f64_req("mesh.L")?, cfg.f64_req("mesh.T")?, cfg.usize_req("mesh.n")?, cfg.usize_req("mesh.m")?)
}

fn hum_into(cfg: &RawConfig, prob: &mut ControlProblem) -> Result<()> {
    prob.tikhonov_eps = cfg.f64_or("hum.eps", prob.tikhonov_eps)?;
    prob.cg_tol = cfg.f64_or("hum.cg_tol", prob.cg_tol)?;
    prob.cg_max = cfg.usize_or("hum.cg_max", prob.cg_max)?;
    Ok(())
}

fn picard_of(cfg: &RawConfig, base: PicardConfig) -> Result<PicardConfig> {
    Ok(PicardConfig {
        max_outer: cfg.usize_or("picard.max_outer", base.max_outer)?,
        outer_tol: cfg.f64_or("picard.outer_tol", base.outer_tol)?,
        damping: cfg.f64_or("picard.damping", base.damping)?,
        ball_radius: cfg.f64_or("picard.ball_radius", base.ball_radius)?,
        tikhonov_eps: cfg.f64_or("hum.eps", base.tikhonov_eps)?,
        cg_tol: cfg.f64_or("hum.cg_tol", base.cg_tol)?,
        cg_max: cfg.usize_or("hum.cg_max", base.cg_max)?,
        inner: InnerConfig {
            tol: cfg.f64_or("picard.inner_tol", base.inner.tol)?,
            max_iter: cfg.usize_or("picard.inner_max", base.inner.max_iter)?,
        },
        ..base
    })
}

fn omega_of(cfg: &RawConfig, section: &str, mesh: &Mesh) -> Result<(f64, f64)> {
    let lo = cfg.f64_or(&format!("{section}.omega_lo"), 0.3 * mesh.l)?;
    let hi = cfg.f64_or(&format!("{section}.omega_hi"), 0.6 * mesh.l)?;
    if !(0.0 <= lo && lo < hi && hi <= mesh.l) {
        return Err(KdvError::Invalid(format!("{section}.omega must satisfy 0 <= lo < hi <= L, got ({lo}, {hi})")));
    }
    Ok((lo, hi))
}

/// Runs a validated scenario and writes its artifacts into `out`.
/// `base` resolves relative profile paths.  `seed` overrides the config.
pub fn run(cfg: &RawConfig, base: &Path, out: &Path, seed: Option<u64>) -> Result<RunOutcome> {
    let mode = validate(cfg)?;
    let seed = match seed {
        Some(s) => s,
        None => cfg.u64_or("seed", 0)?,
    };
    std::fs::create_dir_all(out)?;
    let mut rep = Report::new();
    rep.text("mode", mode.name());
    rep.text("name", cfg.get("name").unwrap_or(mode.name()));
    rep.text("seed", seed.to_string());
    let converged = dispatch(mode, cfg, base, out, seed, &mut rep)?;
    rep.text("status", if converged { "converged" } else { "not_converged" });
    let mut text: String = rep.map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    for (i, w) in rep.warnings.iter().enumerate() {
        text.push_str(&format!("warning.{i} = {w}\n"));
    }
    let mut echo = cfg.clone();
    echo.set("seed", &seed.to_string());
    text.push_str("\n[scenario]\n");
    text.push_str(&echo.echo());
    std::fs::write(out.join("report.txt"), text)?;
    Ok(RunOutcome { mode, converged, summary: rep.map })
}

fn dispatch(mode: ScenarioMode, cfg: &RawConfig, base: &Path, out: &Path, seed: u64, rep: &mut Report) -> Result<bool> {
    match mode {
        ScenarioMode::Simulate => simulate(cfg, base, out, rep),
        ScenarioMode::NullControl => null_control(cfg, base, out, rep),
        ScenarioMode::NullToTrajectory => null_to_trajectory(cfg, base, out, rep),
        ScenarioMode::ExactWeighted => exact_weighted(cfg, base, out, rep),
        ScenarioMode::Regional => regional(cfg, base, out, rep),
        ScenarioMode::CarlemanCheck => carleman_check(cfg, out, seed, rep),
        ScenarioMode::ObservabilityScan => observability_scan(cfg, out, seed, rep),
        ScenarioMode::HardySuite => hardy_suite(cfg, out, seed, rep),
        ScenarioMode::CriticalScan => critical(cfg, out, rep),
    }
}

fn simulate(cfg: &RawConfig, base: &Path, out: &Path, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let op = build_operator(&mesh, BcTag::Forward)?;
    let u0 = profile(cfg, "u0", &mesh, base)?;
    let traj = if cfg.bool_or("solver.nonlinear", false)? {
        let inner = InnerConfig {
            tol: cfg.f64_or("solver.inner_tol", 1e-10)?,
            max_iter: cfg.usize_or("solver.inner_max", 25)?,
        };
        let run = solve_nonlinear(&mesh, &op, &u0, &Forcing::Zero, inner)?;
        rep.int("max_inner", run.max_inner);
        run.trajectory
    } else {
        solve_forward(&mesh, &op, &u0, &Forcing::Zero, &Potential::Const(cfg.f64_or("solver.xi", 1.0)?))?
    };
    rep.num("norm_initial", l2_norm(traj.initial(), mesh.h));
    rep.num("norm_terminal", l2_norm(traj.terminal(), mesh.h));
    rep.num("l2l2", traj.l2l2());
    rep.num("left_trace_l2", traj.left_trace_l2());
    write_trajectory(out, &traj)?;
    Ok(true)
}

fn null_control(cfg: &RawConfig, base: &Path, out: &Path, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let u0 = profile(cfg, "u0", &mesh, base)?;
    let mut prob = ControlProblem::new(mesh.clone(), Mode::DistributedNull, u0);
    prob.omega = omega_of(cfg, "control", &mesh)?;
    prob.xi = Potential::Const(cfg.f64_or("control.xi", 0.0)?);
    hum_into(cfg, &mut prob)?;
    let r = synthesize_null_control(&prob)?;
    rep.control(&r);
    write_control(out, &mesh, &r.control)?;
    write_trajectory(out, &r.trajectory)?;
    Ok(r.converged)
}

fn null_to_trajectory(cfg: &RawConfig, base: &Path, out: &Path, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let u0 = profile(cfg, "u0", &mesh, base)?;
    let ubar = profile(cfg, "ubar", &mesh, base)?;
    let omega = omega_of(cfg, "control", &mesh)?;
    let pc = picard_of(cfg, PicardConfig::default())?;
    let r = null_control_to_trajectory(&mesh, &ubar, &u0, omega, &pc)?;
    rep.control(&r.result);
    rep.int("outer_iters", r.outer_iters());
    rep.int("max_inner", r.max_inner);
    rep.text("diverged", r.diverged.to_string());
    write_control(out, &mesh, &r.result.control)?;
    write_trajectory(out, &r.result.trajectory)?;
    write_picard_log(&out.join("picard.csv"), &r.log)?;
    Ok(r.converged && !r.diverged)
}

fn exact_weighted(cfg: &RawConfig, base: &Path, out: &Path, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let u0 = profile(cfg, "u0", &mesh, base)?;
    let u1 = profile(cfg, "u1", &mesh, base)?;
    let nu = cfg.f64_or("control.nu", 0.25 * mesh.l)?;
    if cfg.bool_or("control.nonlinear", true)? {
        let pc = picard_of(cfg, PicardConfig::default())?;
        let r = exact_control_nonlinear(&mesh, &u0, &u1, nu, &pc)?;
        rep.control(&r.result);
        rep.int("outer_iters", r.outer_iters());
        rep.text("diverged", r.diverged.to_string());
        write_control(out, &mesh, &r.result.control)?;
        write_trajectory(out, &r.result.trajectory)?;
        write_picard_log(&out.join("picard.csv"), &r.log)?;
        Ok(r.converged && !r.diverged)
    } else {
        let mut prob = ControlProblem::new(mesh.clone(), Mode::WeightedExact, u0);
        prob.u1 = Some(u1);
        prob.nu = nu;
        hum_into(cfg, &mut prob)?;
        let r = synthesize_weighted_exact_control(&prob)?;
        rep.control(&r);
        write_control(out, &mesh, &r.control)?;
        write_trajectory(out, &r.trajectory)?;
        Ok(r.converged)
    }
}

fn regional(cfg: &RawConfig, base: &Path, out: &Path, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let u0 = profile(cfg, "u0", &mesh, base)?;
    let u1 = profile(cfg, "u1", &mesh, base)?;
    let mut rc = RegionalConfig::new(cfg.f64_req("regional.l1")?, cfg.f64_req("regional.l2")?, cfg.f64_req("regional.l1p")?);
    rc.l2p_fraction = cfg.f64_or("regional.l2p_fraction", rc.l2p_fraction)?;
    rc.margin_fraction = cfg.f64_or("regional.margin_fraction", rc.margin_fraction)?;
    if let Some(v) = cfg.get("regional.match_margin") {
        rc.match_margin = if v == "none" { None } else { Some(cfg.f64_req("regional.match_margin")?) };
    }
    rc.phase1 = picard_of(cfg, rc.phase1)?;
    rc.phase2 = picard_of(cfg, rc.phase2)?;
    let r = regional_control(&mesh, &u0, &u1, &rc)?;
    rep.num("left_rel_error", r.left_rel_error);
    rep.num("right_abs_error", r.right_abs_error);
    rep.num("max_outside", r.max_outside);
    rep.num("gluing_error", r.gluing_error);
    rep.num("identity_error", r.identity_error);
    rep.num("l2p", r.l2p);
    rep.int("phase1.outer_iters", r.phase1.outer_iters());
    rep.num("phase1.terminal_residual", r.phase1.result.terminal_residual);
    rep.int("phase2.outer_iters", r.phase2_log.len());
    rep.num("phase2.relative_residual", r.phase2.relative_residual);
    rep.warnings.extend(r.warnings.iter().cloned());
    let mut manifest: String = r.manifest().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    manifest.push_str("segment.phase1 = control_phase1.csv\nsegment.phase2 = control_phase2.csv\n");
    std::fs::write(out.join("manifest.txt"), manifest)?;
    let s = r.split_level;
    write_distributed(&out.join("control_phase1.csv"), &mesh, &r.forcing[..s], 0)?;
    write_distributed(&out.join("control_phase2.csv"), &mesh, &r.forcing[s..], s)?;
    write_trajectory(out, &r.trajectory)?;
    write_picard_log(&out.join("picard_phase1.csv"), &r.phase1.log)?;
    write_picard_log(&out.join("picard_phase2.csv"), &r.phase2_log)?;
    Ok(r.converged())
}

fn carleman_check(cfg: &RawConfig, out: &Path, seed: u64, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let omega = omega_of(cfg, "carleman", &mesh)?;
    let s = cfg.f64_or("carleman.s", 1.0)?;
    let samples = cfg.usize_or("carleman.samples", 50)?;
    let kmax = cfg.usize_or("carleman.kmax", 8)?.max(1);
    // the weight is built on the reflected interval, where omega is (L - hi, L - lo)
    let psi = construct_psi(mesh.l, mesh.l - omega.1, mesh.l - omega.0)?;
    let op = build_operator(&mesh, BcTag::Forward)?;
    let w = CarlemanWeight::new(psi.clone(), s, mesh.t);
    let (mut d60, mut nc) = (Vec::new(), Vec::new());
    for vt in sine_corpus(&mesh, samples, kmax, seed, 51) {
        let v = solve_adjoint(&mesh, &op, &vt, &Potential::Zero, &Forcing::Zero)?;
        d60.push(carleman_ratio_d60(&v, &w, omega));
        nc.push(newcarl_sides(&v, &w, omega));
    }
    let max = |v: &[crate::carleman::Sides]| v.iter().map(|x| x.ratio).fold(0.0, f64::max);
    rep.num("s", s);
    rep.num("d60.max_ratio", max(&d60));
    rep.num("newcarl.max_ratio", max(&nc));
    rep.int("degenerate", d60.iter().chain(&nc).filter(|x| x.degenerate).count());
    rep.num("newcarl_exponent", newcarl_exponent(&psi));
    rep.num("weight_lower_bound", weight_lower_bound(&w, &mesh));
    rep.num("psi.min", psi.min_value());
    rep.num("psi.l3", psi.l3);
    let rows = |v: &[crate::carleman::Sides]| v.iter().map(|x| vec![x.s, x.lhs, x.rhs, x.ratio]).collect::<Vec<_>>();
    write_table(&out.join("carleman_d60.csv"), &["s", "lhs", "rhs", "ratio"], rows(&d60))?;
    write_table(&out.join("carleman_newcarl.csv"), &["s", "lhs", "rhs", "ratio"], rows(&nc))?;
    Ok(true)
}

fn observability_scan(cfg: &RawConfig, out: &Path, seed: u64, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let omega = omega_of(cfg, "observe", &mesh)?;
    let samples = cfg.usize_or("observe.samples", 50)?;
    let kmax = cfg.usize_or("observe.kmax", 8)?.max(1);
    let xi = Potential::Const(cfg.f64_or("observe.xi", 0.0)?);
    let op = build_operator(&mesh, BcTag::Forward)?;
    let mut rows = Vec::new();
    let (mut c_star, mut degenerate) = (0.0f64, 0);
    for (i, vt) in sine_corpus(&mesh, samples, kmax, seed, 51).iter().enumerate() {
        let v = solve_adjoint(&mesh, &op, vt, &xi, &Forcing::Zero)?;
        let (r, d) = observability_ratio_o24(&v, omega);
        degenerate += d as usize;
        c_star = c_star.max(r);
        rows.push(vec![i as f64, r]);
    }
    rep.num("c_star", c_star);
    rep.int("samples", samples);
    rep.int("degenerate", degenerate);
    write_table(&out.join("observability.csv"), &["sample", "ratio"], rows)?;
    Ok(true)
}

fn hardy_suite(cfg: &RawConfig, out: &Path, seed: u64, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let samples = cfg.usize_or("hardy.samples", 200)?;
    let kmax = cfg.usize_or("hardy.kmax", 8)?.max(1);
    let weighted = weighted_corpus(&mesh, samples, kmax, seed, 31);
    let sines = sine_corpus(&mesh, samples, kmax, seed, 32);
    let p1 = verify_hardy_p1(&weighted, &mesh);
    let poi = verify_q1_and_poi(&sines, &mesh);
    let p2p = verify_hardy_p2p(&sines, &mesh);
    let coer = coercivity_threshold_check(mesh.l, mesh.n, seed);
    for (tag, r) in [("p1", &p1), ("poi", &poi.poi), ("p2p", &p2p)] {
        rep.num(&format!("{tag}.max_ratio"), r.max_ratio);
        rep.num(&format!("{tag}.bound"), r.bound);
        rep.int(&format!("{tag}.violations"), r.violations);
        rep.int(&format!("{tag}.skipped"), r.skipped);
    }
    rep.num("q1_constant", poi.q1_constant);
    rep.num("coercivity.min_ratio", coer.min_ratio);
    rep.num("coercivity.bound", coer.bound);
    rep.text("coercivity.asserted", coer.asserted.to_string());
    let nan = f64::NAN;
    let mut rows = Vec::new();
    for i in 0..samples {
        let (lhs, rhs, _) = poi_sides(&sines[i], &mesh);
        rows.push(vec![
            i.to_string(),
            fmt(hardy_p1_ratio(&weighted[i], &mesh).unwrap_or(nan)),
            fmt(if rhs > 0.0 { lhs / rhs } else { nan }),
            fmt(hardy_p2p_ratio(&sines[i], &mesh).unwrap_or(nan)),
        ]);
    }
    let header: Vec<String> = ["sample", "p1", "poi", "p2p"].iter().map(|s| s.to_string()).collect();
    write_records(&out.join("hardy.csv"), &header, &rows)?;
    Ok(true)
}

fn critical(cfg: &RawConfig, out: &Path, rep: &mut Report) -> Result<bool> {
    let mesh = mesh_of(cfg)?;
    let mode = uncontrollable_mode_residual(&Mesh::new(2.0 * PI, mesh.t, mesh.n, mesh.m)?);
    rep.num("mode_residual", mode.interior);
    rep.num("mode_boundary_max", mode.boundary_max());
    let keys = ["critical.l_min", "critical.l_max", "critical.l_step"];
    let given = keys.iter().filter(|k| cfg.get(k).is_some()).count();
    if given == 0 {
        let ritz = crate::regional::boundary_min_ritz(mesh.l, mesh.t, mesh.n, mesh.m)?;
        rep.num("ritz_min", ritz);
        write_table(&out.join("ritz.csv"), &["L", "ritz_min"], [vec![mesh.l, ritz]])?;
        return Ok(true);
    }
    if given != 3 {
        return Err(KdvError::MissingKeys(keys.iter().filter(|k| cfg.get(k).is_none()).map(|k| k.to_string()).collect()));
    }
    let (a, b, step) = (cfg.f64_req(keys[0])?, cfg.f64_req(keys[1])?, cfg.f64_req(keys[2])?);
    if !(step > 0.0 && b > a) {
        return Err(KdvError::Invalid("critical scan needs l_min < l_max and l_step > 0".into()));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=count).map(|k| a + k as f64 * step).collect();
    let scan = critical_scan(&grid, mesh.t, mesh.n, mesh.m, cfg.f64_or("critical.offset", 0.3)?)?;
    rep.num("dip.L", scan.dip.l);
    rep.num("dip.ritz_min", scan.dip.ritz_min);
    rep.num("dip.left", scan.left.ritz_min);
    rep.num("dip.right", scan.right.ritz_min);
    rep.num("dip.depth", scan.depth);
    let grid_min = scan.grid.iter().map(|p| p.ritz_min).fold(f64::INFINITY, f64::min);
    let grid_max = scan.grid.iter().map(|p| p.ritz_min).fold(0.0, f64::max);
    rep.num("grid.min", grid_min);
    rep.num("grid.max", grid_max);
    write_table(&out.join("ritz.csv"), &["L", "ritz_min"], scan.grid.iter().map(|p| vec![p.l, p.ritz_min]))?;
    Ok(true)
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Ok,
    NotConverged,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct ScanCell {
    pub value: String,
    pub status: CellStatus,
    pub summary: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub cells: Vec<ScanCell>,
}

impl ScanOutcome {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Ok)
    }
}

/// Output directory of scan cell `i`.
pub fn cell_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("cell_{i:03}"))
}

/// Runs the scenario once per value of `param`, concurrently, and writes
/// `scan.csv` with one row per cell.  Cell failures are recorded in the
/// table rather than aborting the scan.
pub fn scan(cfg: &RawConfig, base: &Path, out: &Path, param: &str, values: &[String], seed: Option<u64>) -> Result<ScanOutcome> {
    use rayon::prelude::*;
    let mode = validate(cfg)?;
    if !mode.allowed_keys().iter().any(|k| k == param) || param == "mode" {
        return Err(KdvError::Invalid(format!("'{param}' is not a scannable key of mode {}", mode.name())));
    }
    std::fs::create_dir_all(out)?;
    let cells: Vec<ScanCell> = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut c = cfg.clone();
            c.set(param, v);
            let (status, summary) = match run(&c, base, &cell_dir(out, i), seed) {
                Ok(r) if r.converged => (CellStatus::Ok, r.summary),
                Ok(r) => (CellStatus::NotConverged, r.summary),
                Err(e) => (CellStatus::Failed(e.to_string()), BTreeMap::new()),
            };
            ScanCell { value: v.clone(), status, summary }
        })
        .collect();
    let skip = ["mode", "name", "seed", "status"];
    let mut cols: Vec<String> = cells.iter().flat_map(|c| c.summary.keys().cloned()).collect();
    cols.sort();
    cols.dedup();
    cols.retain(|k| !skip.contains(&k.as_str()));
    let mut header = vec![param.to_string(), "status".to_string(), "message".to_string()];
    header.extend(cols.iter().cloned());
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let (st, msg) = match &c.status {
                CellStatus::Ok => ("ok", String::new()),
                CellStatus::NotConverged => ("not_converged", String::new()),
                CellStatus::Failed(m) => ("error", m.clone()),
            };
            let mut row = vec![c.value.clone(), st.to_string(), msg];
            row.extend(cols.iter().map(|k| c.summary.get(k).cloned().unwrap_or_default()));
            row
        })
        .collect();
    write_records(&out.join("scan.csv"), &header, &rows)?;
    Ok(ScanOutcome { cells })
}
