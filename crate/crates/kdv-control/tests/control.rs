use kdv_control::hum::*;
use kdv_control::kdv_solve::{solve_forward, Forcing, Potential};
use kdv_control::nonlinear_ctrl::*;
use kdv_control::regional::*;
use kdv_control::weights::l2_norm;
use kdv_control::*;
use std::f64::consts::PI;

fn sine(mesh: &Mesh, k: f64, a: f64) -> Vec<f64> {
    mesh.nodes().iter().map(|x| a * (k * PI * x / mesh.l).sin()).collect()
}

fn null_problem(u0: Vec<f64>) -> ControlProblem {
    let mesh = Mesh::new(1.0, 1.0, 48, 96).unwrap();
    ControlProblem::new(mesh, Mode::DistributedNull, u0)
}

fn distributed(c: &Forcing) -> &Vec<Vec<f64>> {
    match c {
        Forcing::Distributed(f) => f,
        other => panic!("unexpected control {other:?}"),
    }
}

#[test]
fn zero_data_gives_zero_control() {
    let mesh = Mesh::new(1.0, 1.0, 48, 96).unwrap();
    let r = synthesize_null_control(&null_problem(vec![0.0; mesh.n])).unwrap();
    assert_eq!(r.cost, 0.0);
    assert_eq!(r.terminal_residual, 0.0);
    assert!(r.adjoint_datum.iter().all(|v| *v == 0.0));
}

#[test]
fn null_control_reaches_rest_and_is_linear() {
    let mesh = Mesh::new(1.0, 1.0, 48, 96).unwrap();
    let a = sine(&mesh, 1.0, 1.0);
    let b = sine(&mesh, 3.0, 0.5);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 2.0 * p - q).collect();
    let ra = synthesize_null_control(&null_problem(a)).unwrap();
    let rb = synthesize_null_control(&null_problem(b)).unwrap();
    let rab = synthesize_null_control(&null_problem(ab)).unwrap();
    assert!(ra.converged && ra.relative_residual <= 1e-3, "{}", ra.relative_residual);
    let (fa, fb, fab) = (distributed(&ra.control), distributed(&rb.control), distributed(&rab.control));
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..fa.len() {
        for i in 0..mesh.n {
            err = err.max((fab[k][i] - 2.0 * fa[k][i] + fb[k][i]).abs());
            scale = scale.max(fab[k][i].abs());
        }
    }
    assert!(err <= 1e-6 * scale, "{err} vs {scale}");
    // control vanishes off omega = (0.3, 0.6)
    for (i, x) in mesh.nodes().iter().enumerate() {
        if *x < 0.29 || *x > 0.61 {
            assert!(fa.iter().all(|r| r[i] == 0.0), "leak at x = {x}");
        }
    }
}

#[test]
fn control_drives_independent_forward_solve() {
    let mesh = Mesh::new(1.0, 1.0, 48, 96).unwrap();
    let u0 = sine(&mesh, 2.0, 1.0);
    let r = synthesize_null_control(&null_problem(u0.clone())).unwrap();
    let op = build_operator(&mesh, BcTag::Forward).unwrap();
    let y = solve_forward(&mesh, &op, &u0, &r.control, &Potential::Zero).unwrap();
    let end = l2_norm(y.terminal(), mesh.h);
    assert!((end - r.terminal_residual).abs() <= 1e-12 + 1e-9 * end);
    assert!(end <= 1e-3 * l2_norm(&u0, mesh.h));
}

#[test]
fn gramian_is_symmetric_and_nonnegative() {
    let mesh = Mesh::new(1.0, 1.0, 32, 64).unwrap();
    for mode in [Mode::DistributedNull, Mode::WeightedExact] {
        let prob = ControlProblem::new(mesh.clone(), mode, vec![0.0; mesh.n]);
        let g = Gramian::new(&prob).unwrap();
        let a = sine(&mesh, 1.0, 1.0);
        let b: Vec<f64> = mesh.nodes().iter().map(|x| x * x * (1.0 - x)).collect();
        let c = gramian_algebra(&g, &a, &b).unwrap();
        assert!(c.asymmetry <= 1e-8, "{mode:?} {}", c.asymmetry);
        assert!(c.quad_a >= 0.0);
    }
}

#[test]
fn weighted_exact_control_hits_target() {
    let mesh = Mesh::new(1.0, 2.0, 48, 96).unwrap();
    let mut prob = ControlProblem::new(mesh.clone(), Mode::WeightedExact, sine(&mesh, 1.0, 1e-2));
    prob.u1 = Some(sine(&mesh, 2.0, 1e-2));
    let r = synthesize_weighted_exact_control(&prob).unwrap();
    assert!(r.relative_residual <= 1e-2, "{}", r.relative_residual);
    assert!(r.certificate.contains_key("h_weighted_tmt"));
    let mut missing = prob.clone();
    missing.u1 = None;
    assert!(synthesize_weighted_exact_control(&missing).is_err());
}

#[test]
fn short_length_mode_is_not_a_critical_mode() {
    let m = uncontrollable_mode_residual(&Mesh::new(1.0, 1.0, 64, 8).unwrap());
    assert!(m.boundary_max() > 0.1);
    let m = uncontrollable_mode_residual(&Mesh::new(2.0 * PI, 1.0, 64, 8).unwrap());
    assert!(m.boundary_max() <= 1e-12);
    assert!(m.interior < 1e-2);
}

#[test]
fn critical_lengths_match_closed_form() {
    let set = critical_lengths(2).unwrap();
    // 2 pi sqrt((k^2 + k l + l^2) / 3) for (1,1), (1,2) = (2,1), (2,2)
    let expect = [2.0 * PI, 9.597_724_091_861_606, 4.0 * PI];
    assert_eq!(set.lengths.len(), 3);
    for (a, b) in set.lengths.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(critical_lengths(0).is_err());
}

#[test]
fn nearest_noncritical_moves_off_the_set() {
    let set = critical_lengths(4).unwrap();
    assert_eq!(nearest_noncritical(1.0, &set, 0.1).unwrap(), 1.0);
    let l = nearest_noncritical(2.0 * PI, &set, 0.1).unwrap();
    assert!((l - (2.0 * PI - 0.1)).abs() < 1e-12);
    assert!(nearest_noncritical(2.0 * PI, &set, 0.0).is_err());
    assert!(nearest_noncritical(0.05, &critical_lengths(1).unwrap(), 7.0).is_err());
}

#[test]
fn cutoff_plateau_and_support() {
    let mu = CutoffMu::new(0.4, 0.8).unwrap();
    assert_eq!(mu.degree(), 11);
    assert!((mu.end() - 0.6).abs() < 1e-15);
    for x in [0.0, 0.2, 0.4] {
        assert_eq!(mu.eval(x)[0], 1.0);
    }
    for x in [0.61, 0.7, 1.0] {
        assert_eq!(mu.eval(x), [0.0; 4]);
    }
    assert!(mu.eval(0.6)[0].abs() < 1e-12);
    let mid = mu.eval(0.45)[0];
    assert!(mid > 0.0 && mid < 1.0);
    assert!(CutoffMu::new(0.8, 0.4).is_err());
}

#[test]
fn boundary_gramian_dips_at_critical_length() {
    let at = boundary_min_ritz(2.0 * PI, 1.0, 48, 64).unwrap();
    let off = boundary_min_ritz(2.0 * PI - 0.3, 1.0, 48, 64).unwrap();
    assert!(off > 100.0 * at, "{off} vs {at}");
}

#[test]
fn nonlinear_control_from_trajectory_start_is_zero() {
    let mesh = Mesh::new(1.0, 1.0, 32, 64).unwrap();
    let u0 = sine(&mesh, 1.0, 1e-2);
    let r = null_control_to_trajectory(&mesh, &u0, &u0, (0.3, 0.6), &PicardConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.result.cost, 0.0);
}

#[test]
fn nonlinear_null_control_tracks_trajectory() {
    let mesh = Mesh::new(1.0, 1.0, 32, 64).unwrap();
    let u0bar = sine(&mesh, 1.0, 1e-2);
    let u0 = sine(&mesh, 2.0, 1e-2);
    let r = null_control_to_trajectory(&mesh, &u0bar, &u0, (0.3, 0.6), &PicardConfig::default()).unwrap();
    assert!(r.converged && !r.diverged);
    assert!(r.result.relative_residual <= 1e-3, "{}", r.result.relative_residual);
    let bad = PicardConfig { damping: 0.0, ..PicardConfig::default() };
    assert!(null_control_to_trajectory(&mesh, &u0bar, &u0, (0.3, 0.6), &bad).is_err());
}

#[test]
fn exact_map_contracts_on_small_ball() {
    let mesh = Mesh::new(1.0, 2.0, 24, 48).unwrap();
    let u0 = sine(&mesh, 1.0, 1e-3);
    let u1 = sine(&mesh, 2.0, 1e-3);
    let cfg = PicardConfig { ball_radius: 1e-2, ..PicardConfig::default() };
    let map = ExactMap::new(&mesh, &u0, &u1, 0.25, &cfg).unwrap();
    let p = contraction_probe(&map, 4, 9).unwrap();
    assert!(p.within_bound(), "{p:?}");
    assert!(p.max_ratio < 1.0);
}

#[test]
fn regional_control_of_rest_is_rest() {
    let mesh = Mesh::new(1.0, 1.0, 64, 64).unwrap();
    let z = vec![0.0; mesh.n];
    let r = regional_control(&mesh, &z, &z, &RegionalConfig::new(0.3, 0.8, 0.4)).unwrap();
    assert!(r.forcing.iter().flatten().all(|v| *v == 0.0));
    assert_eq!(r.max_outside, 0.0);
    assert!(r.converged());
}
