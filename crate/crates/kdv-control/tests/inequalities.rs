use kdv_control::carleman::*;
use kdv_control::kdv_solve::{solve_adjoint, solve_forward, Forcing, Potential};
use kdv_control::weights::*;
use kdv_control::*;
use std::f64::consts::PI;

fn mesh(l: f64, n: usize) -> Mesh {
    Mesh::new(l, 1.0, n, 64).unwrap()
}

#[test]
fn weighted_norms_of_simple_profiles() {
    let m = mesh(2.0, 2000);
    let ones = vec![1.0; m.n];
    let target = (m.l * m.l / 2.0f64).sqrt();
    assert!((wnorm(&ones, &m, WeightKind::XdX) - target).abs() < 5e-3);
    let lmx: Vec<f64> = m.nodes().iter().map(|x| m.l - x).collect();
    assert!((wnorm(&lmx, &m, WeightKind::InvLmXdX) - target).abs() < 5e-3);
    assert_eq!(wnorm(&vec![0.0; m.n], &m, WeightKind::LmXdX), 0.0);
}

#[test]
fn hardy_p1_single_profile_and_zero() {
    let m = mesh(1.0, 256);
    let u: Vec<f64> = m.nodes().iter().map(|x| x * (1.0 - x).powi(2)).collect();
    // quadrature oracle: for u = x (L-x)^2 with L = 1,
    // int x^2 dx / int (1 - 4x + 3x^2)^2/(1-x)^2 dx = (1/3) / int (1 - 3x)^2 dx = (1/3) / 1 = 1/3
    let r = hardy_p1_ratio(&u, &m).unwrap();
    assert!((r - (1.0f64 / 3.0).sqrt()).abs() < 0.02, "{r}");
    assert!(r < 2.0 / 3.0);
    assert!(hardy_p1_ratio(&vec![0.0; m.n], &m).is_none());
    let rep = verify_hardy_p1(&[vec![0.0; m.n]], &m);
    assert_eq!((rep.samples, rep.skipped), (0, 1));
}

#[test]
fn hardy_p2p_single_profile() {
    let m = mesh(1.0, 512);
    let u: Vec<f64> = m.nodes().iter().map(|x| (PI * (1.0 - x)).sin() * (1.0 - x)).collect();
    let r = hardy_p2p_ratio(&u, &m).unwrap();
    assert!(r < 4.0, "{r}");
}

#[test]
fn corpus_inequalities_have_no_violations() {
    let m = mesh(1.0, 128);
    let p1 = verify_hardy_p1(&weighted_corpus(&m, 200, 8, 11, 1), &m);
    assert_eq!(p1.violations, 0);
    assert!(p1.max_ratio <= 0.716, "{}", p1.max_ratio);
    let s = sine_corpus(&m, 200, 8, 11, 2);
    let p2p = verify_hardy_p2p(&s, &m);
    assert_eq!(p2p.violations, 0);
    let poi = verify_q1_and_poi(&s, &m);
    assert_eq!(poi.poi.violations, 0);
    assert!(poi.q1_constant.is_finite());
}

#[test]
fn poi_holds_for_quartic() {
    let m = mesh(1.0, 256);
    let w: Vec<f64> = m.nodes().iter().map(|x| x * x * (1.0 - x).powi(2)).collect();
    let (lhs, rhs, _) = poi_sides(&w, &m);
    // exact: int w_x^2 = 2/105, 4 int x^2 w_xx^2 = 4 * 2/35 (w_x(1) = 0)
    assert!((lhs - 2.0 / 105.0).abs() < 1e-3);
    assert!(lhs < rhs);
    assert_eq!(poi_sides(&vec![0.0; m.n], &m).0, 0.0);
}

#[test]
fn coercivity_threshold() {
    let r = coercivity_threshold_check(1.0, 96, 1);
    assert!(r.asserted && r.positive && r.min_ratio > 0.0);
    assert!((r.bound - (1.5 - 1.0 / (2.0 * PI * PI))).abs() < 1e-12);
    let r = coercivity_threshold_check(PI * 3f64.sqrt() / 2.0, 96, 1);
    assert!(r.positive);
    assert!((r.bound - 9.0 / 8.0).abs() < 1e-12);
    let r = coercivity_threshold_check(10.0, 64, 1);
    assert!(!r.asserted);
}

#[test]
fn psi_slope_spot_value() {
    // (0.09 + 0.3 - 0.001*0.216 - 0.001*0.027 + 0.001) / 0.4
    let a = psi_slope(1.0, 0.3, 0.6, 1e-3);
    assert!((a - 0.976_892_5).abs() < 1e-12, "{a}");
}

#[test]
fn psi_for_reference_geometry() {
    let psi = construct_psi(1.0, 0.3, 0.6).unwrap();
    assert_eq!(psi.sample(SAMPLER_POINTS).total(), 0);
    assert!((psi.eval(0.0)[1] + 1.0).abs() < 1e-12);
    assert!(psi.eval(1.0)[1] > 0.0);
    assert!(newcarl_exponent(&psi) < 0.0);
    assert!(construct_psi(1.0, 0.6, 0.3).is_err());
}

#[test]
fn psi_for_seeded_triples() {
    for (l, l1, l2) in kdv_control::suite::psi_triples(5, 20) {
        let psi = construct_psi(l, l1, l2).unwrap();
        assert_eq!(psi.sample(SAMPLER_POINTS).total(), 0, "({l}, {l1}, {l2})");
        assert!(newcarl_exponent(&psi) < 0.0);
    }
}

#[test]
fn carleman_sides_of_zero_are_degenerate() {
    let m = mesh(1.0, 32);
    let op = build_operator(&m, BcTag::Forward).unwrap();
    let z = solve_adjoint(&m, &op, &vec![0.0; m.n], &Potential::Zero, &Forcing::Zero).unwrap();
    let w = CarlemanWeight::new(construct_psi(1.0, 0.4, 0.7).unwrap(), 1.0, 1.0);
    let d = carleman_ratio_d60(&z, &w, (0.3, 0.6));
    assert_eq!(d.ratio, 0.0);
    let (o, degenerate) = observability_ratio_o24(&z, (0.3, 0.6));
    assert_eq!(o, 0.0);
    assert!(degenerate);
    let q = solve_forward(&m, &op, &vec![0.0; m.n], &Forcing::Zero, &Potential::Zero).unwrap();
    let c7 = carleman_sides_c7(&q, None, &w, (0.3, 0.6), 0.5);
    assert_eq!((c7.lhs, c7.rhs), (0.0, 0.0));
}

#[test]
fn carleman_ratios_stay_bounded_in_s() {
    let m = Mesh::new(1.0, 1.0, 64, 128).unwrap();
    let op = build_operator(&m, BcTag::Forward).unwrap();
    let psi = construct_psi(1.0, 0.4, 0.7).unwrap();
    let corpus = sine_corpus(&m, 10, 6, 3, 51);
    let mut d = [0.0f64; 3];
    let mut c7 = [0.0f64; 3];
    for vt in &corpus {
        let v = solve_adjoint(&m, &op, vt, &Potential::Zero, &Forcing::Zero).unwrap();
        let q = solve_forward(&m, &op, vt, &Forcing::Zero, &Potential::Zero).unwrap();
        for (i, s) in [1.0, 2.0, 4.0].iter().enumerate() {
            let w = CarlemanWeight::new(psi.clone(), *s, 1.0);
            d[i] = d[i].max(carleman_ratio_d60(&v, &w, (0.3, 0.6)).ratio);
            c7[i] = c7[i].max(carleman_sides_c7(&q, None, &w, (0.3, 0.6), 0.0).ratio);
        }
    }
    assert!(d.iter().chain(&c7).all(|r| r.is_finite() && *r > 0.0));
    assert!(d[2] <= 2.0 * d[0] && d[1] <= 2.0 * d[0]);
}

#[test]
fn observability_over_whole_interval_is_small() {
    let m = Mesh::new(1.0, 1.0, 64, 128).unwrap();
    let op = build_operator(&m, BcTag::Forward).unwrap();
    for vt in sine_corpus(&m, 5, 6, 8, 51) {
        let v = solve_adjoint(&m, &op, &vt, &Potential::Zero, &Forcing::Zero).unwrap();
        let (whole, _) = observability_ratio_o24(&v, (0.0, 1.0));
        let (part, _) = observability_ratio_o24(&v, (0.3, 0.6));
        // ||v(0)||^2 <= max_t ||v(t)||^2 and the norm is monotone, so the
        // full-interval ratio is at most 1/T
        assert!(whole <= 1.0 / m.t + 1e-12);
        assert!(part >= whole);
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
    #[test]
    fn hardy_p1_on_random_vanishing_profiles(c in proptest::collection::vec(-1.0f64..1.0, 4), l in 0.5f64..3.0) {
        let m = mesh(l, 256);
        let u: Vec<f64> = m
            .nodes()
            .iter()
            .map(|x| {
                let s = x / l;
                x * (l - x) * (l - x) * c.iter().enumerate().map(|(k, a)| a * s.powi(k as i32)).sum::<f64>()
            })
            .collect();
        if let Some(r) = hardy_p1_ratio(&u, &m) {
            proptest::prop_assert!(r <= 2.0 / 3.0 + 0.05, "ratio {}", r);
        }
    }
}
