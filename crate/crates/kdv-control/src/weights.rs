//! Weighted norms on the interior-node representation and numerical checks
//! of the Hardy, Poincare and coercivity inequalities.
//!
//! Nodal quantities use the trapezoid rule with zero boundary values.  First
//! derivatives live on the half points `x_{j+1/2}`, `j = 0..=n`, and are
//! integrated with the midpoint rule there, so singular weights are never
//! evaluated at `x = L`.

use crate::mesh::Mesh;
use crate::rng::CounterRng;
use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    XdX,
    LmXdX,
    InvLmXdX,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VNormKind {
    H10,
    WeightedV,
}

impl WeightKind {
    pub fn weight(self, x: f64, l: f64) -> f64 {
        match self {
            WeightKind::XdX => x,
            WeightKind::LmXdX => l - x,
            WeightKind::InvLmXdX => 1.0 / (l - x),
        }
    }

    /// The V space paired with this H: `H^1_0` for the regular weights and
    /// `||(L-x)^{-1} u_x||` for `1/(L-x) dx`.
    pub fn v_kind(self) -> VNormKind {
        match self {
            WeightKind::InvLmXdX => VNormKind::WeightedV,
            _ => VNormKind::H10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightKind::XdX => "xdx",
            WeightKind::LmXdX => "lmxdx",
            WeightKind::InvLmXdX => "invlmxdx",
        }
    }
}

pub fn l2_inner(u: &[f64], v: &[f64], h: f64) -> f64 {
    h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

pub fn l2_norm(u: &[f64], h: f64) -> f64 {
    l2_inner(u, u, h).sqrt()
}

pub fn winner(u: &[f64], v: &[f64], mesh: &Mesh, kind: WeightKind) -> f64 {
    let mut s = 0.0;
    for (i, (a, b)) in u.iter().zip(v).enumerate() {
        s += a * b * kind.weight(mesh.x(i + 1), mesh.l);
    }
    s * mesh.h
}

pub fn wnorm(u: &[f64], mesh: &Mesh, kind: WeightKind) -> f64 {
    winner(u, u, mesh, kind).sqrt()
}

/// Differences at the half points, `(u_{j+1} - u_j)/h` for `j = 0..=n`.
pub fn half_diff(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let at = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { u[i - 1] };
    (0..=n).map(|j| (at(j + 1) - at(j)) / h).collect()
}

/// Centered second difference at interior nodes.
pub fn second_diff(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let at = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { u[i - 1] };
    (1..=n).map(|i| (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h)).collect()
}

/// Centered first difference at interior nodes.
pub fn first_diff(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let at = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { u[i - 1] };
    (1..=n).map(|i| (at(i + 1) - at(i - 1)) / (2.0 * h)).collect()
}

pub fn vnorm(u: &[f64], mesh: &Mesh, kind: VNormKind) -> f64 {
    let w = half_diff(u, mesh.h);
    let s: f64 = w
        .iter()
        .enumerate()
        .map(|(j, d)| match kind {
            VNormKind::H10 => d * d,
            VNormKind::WeightedV => {
                let y = mesh.l - (j as f64 + 0.5) * mesh.h;
                d * d / (y * y)
            }
        })
        .sum();
    (s * mesh.h).sqrt()
}

/// `||f||_{H^{-1}}` surrogate: `||g_x||` with `-g_xx = f`, `g(0) = g(L) = 0`.
pub fn hminus1_norm(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    // tridiagonal solve of (-g_{i-1} + 2 g_i - g_{i+1}) / h^2 = f_i
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let off = -1.0 / (h * h);
    let diag = 2.0 / (h * h);
    for i in 0..n {
        let (ci, di) = if i == 0 {
            (off / diag, f[0] / diag)
        } else {
            let den = diag - off * c[i - 1];
            (off / den, (f[i] - off * d[i - 1]) / den)
        };
        c[i] = ci;
        d[i] = di;
    }
    let mut g = vec![0.0; n];
    for i in (0..n).rev() {
        g[i] = d[i] - if i + 1 < n { c[i] * g[i + 1] } else { 0.0 };
    }
    (half_diff(&g, h).iter().map(|v| v * v).sum::<f64>() * h).sqrt()
}

/// Trapezoid rule in time over levels `0..=m`.
pub fn time_trapezoid(vals: &[f64], dt: f64) -> f64 {
    let m = vals.len() - 1;
    dt * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[m]))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InequalityReport {
    pub samples: usize,
    pub skipped: usize,
    pub max_ratio: f64,
    pub bound: f64,
    pub violations: usize,
}

fn tally(ratios: impl Iterator<Item = Option<f64>>, bound: f64) -> InequalityReport {
    let mut r = InequalityReport { bound, ..Default::default() };
    for q in ratios {
        match q {
            Some(v) => {
                r.samples += 1;
                r.max_ratio = r.max_ratio.max(v);
                if v > bound {
                    r.violations += 1;
                }
            }
            None => r.skipped += 1,
        }
    }
    r
}

/// `||(L-x)^{-2} u|| / ||(L-x)^{-1} u_x||`.
pub fn hardy_p1_ratio(u: &[f64], mesh: &Mesh) -> Option<f64> {
    let num: f64 = u
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let y = mesh.l - mesh.x(i + 1);
            v * v / y.powi(4)
        })
        .sum();
    let den = vnorm(u, mesh, VNormKind::WeightedV).powi(2) / mesh.h;
    (den > 0.0).then(|| (num / den).sqrt())
}

/// `int u^2/(L-x)^2 / int u_x^2`.
pub fn hardy_p2p_ratio(u: &[f64], mesh: &Mesh) -> Option<f64> {
    let num: f64 = u
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let y = mesh.l - mesh.x(i + 1);
            v * v / (y * y)
        })
        .sum();
    let den = vnorm(u, mesh, VNormKind::H10).powi(2) / mesh.h;
    (den > 0.0).then(|| num / den)
}

pub fn verify_hardy_p1(samples: &[Vec<f64>], mesh: &Mesh) -> InequalityReport {
    tally(samples.iter().map(|u| hardy_p1_ratio(u, mesh)), 2.0 / 3.0 + 0.05)
}

pub fn verify_hardy_p2p(samples: &[Vec<f64>], mesh: &Mesh) -> InequalityReport {
    tally(samples.iter().map(|u| hardy_p2p_ratio(u, mesh)), 4.2)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoiReport {
    /// Largest `lhs / rhs` of `int w_x^2 <= 4 int x^2 w_xx^2 + 2L w_x(L)^2`.
    pub poi: InequalityReport,
    /// Largest `||w_x|| / ||x w_xx||`.
    pub q1_constant: f64,
}

pub fn poi_sides(w: &[f64], mesh: &Mesh) -> (f64, f64, f64) {
    let h = mesh.h;
    let lhs: f64 = half_diff(w, h).iter().map(|d| d * d).sum::<f64>() * h;
    let wxx = second_diff(w, h);
    let xw: f64 = wxx.iter().enumerate().map(|(i, d)| (mesh.x(i + 1) * d).powi(2)).sum::<f64>() * h;
    let n = w.len();
    let wx_l = (-4.0 * w[n - 1] + w[n - 2]) / (2.0 * h);
    (lhs, 4.0 * xw + 2.0 * mesh.l * wx_l * wx_l, xw)
}

pub fn verify_q1_and_poi(samples: &[Vec<f64>], mesh: &Mesh) -> PoiReport {
    let mut q1: f64 = 0.0;
    let poi = tally(
        samples.iter().map(|w| {
            let (lhs, rhs, xw) = poi_sides(w, mesh);
            if xw > 0.0 {
                q1 = q1.max((lhs / xw).sqrt());
            }
            (rhs > 0.0).then(|| lhs / rhs)
        }),
        1.05,
    );
    PoiReport { poi, q1_constant: q1 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityReport {
    pub l: f64,
    /// Smallest generalized eigenvalue of `a(w,w)` against `||w_x||^2`.
    pub min_ratio: f64,
    /// Smallest ratio seen on random unit vectors.
    pub sampled_min: f64,
    /// `3/2 - L^2/(2 pi^2)`.
    pub bound: f64,
    pub asserted: bool,
    pub positive: bool,
}

/// Discrete `a(w,w) = int w_x ((x w)_xx + x w) dx` in summation-by-parts
/// form: `int x w_x w_xx` becomes `sum_i x_i (w_{i+1/2}^2 - w_{i-1/2}^2)/2`.
fn coercivity_matrices(mesh: &Mesh) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, h) = (mesh.n, mesh.h);
    let mut g = DMatrix::<f64>::zeros(n + 1, n);
    for j in 0..=n {
        if j < n {
            g[(j, j)] += 1.0 / h;
        }
        if j > 0 {
            g[(j, j - 1)] -= 1.0 / h;
        }
    }
    // weights on w_{j+1/2}^2: node j contributes +x_j/2, node j+1 contributes -x_{j+1}/2
    let mut wsq = DMatrix::<f64>::zeros(n + 1, n + 1);
    for j in 0..=n {
        let xj = mesh.x(j);
        let xj1 = mesh.x(j + 1);
        let c = 0.5 * xj - 0.5 * xj1 + 2.0 * h;
        wsq[(j, j)] = c;
    }
    // the right boundary node x_{n+1} = L contributes its half of the
    // telescoping sum with the one-sided flux w_{n+1/2}
    wsq[(n, n)] += 0.5 * mesh.l;
    let mut a = g.transpose() * &wsq * &g;
    // int x w w_x = -1/2 int w^2
    for i in 0..n {
        a[(i, i)] -= 0.5 * h;
    }
    let k = g.transpose() * &g * h;
    (a, k)
}

pub fn coercivity_threshold_check(l: f64, n: usize, seed: u64) -> CoercivityReport {
    let mesh = Mesh::new(l, 1.0, n, 8).expect("valid mesh");
    let (a, k) = coercivity_matrices(&mesh);
    let chol = k.clone().cholesky().expect("stiffness matrix is SPD");
    let linv = chol.l().try_inverse().expect("invertible factor");
    let s = &linv * &a * linv.transpose();
    let sym = (&s + s.transpose()) * 0.5;
    let min_ratio = sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rng = CounterRng::new(seed, 0xC0E);
    let mut sampled = f64::INFINITY;
    for _ in 0..64 {
        let w = nalgebra::DVector::from_fn(n, |_, _| rng.normal());
        let num = w.dot(&(&a * &w));
        let den = w.dot(&(&k * &w));
        sampled = sampled.min(num / den);
    }
    let asserted = l < std::f64::consts::PI * 3f64.sqrt() * 0.95;
    CoercivityReport {
        l,
        min_ratio,
        sampled_min: sampled,
        bound: 1.5 - l * l / (2.0 * std::f64::consts::PI.powi(2)),
        asserted,
        positive: min_ratio > 0.0,
    }
}

/// Random sine series `sum_k a_k sin(k pi x / L)`, vanishing at both ends.
pub fn sine_corpus(mesh: &Mesh, count: usize, kmax: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|s| {
            let mut rng = CounterRng::new(seed, stream.wrapping_mul(1_000_003).wrapping_add(s as u64));
            let a: Vec<f64> = (1..=kmax).map(|k| rng.normal() / k as f64).collect();
            mesh.nodes()
                .iter()
                .map(|&x| {
                    a.iter()
                        .enumerate()
                        .map(|(k, ak)| ak * ((k + 1) as f64 * std::f64::consts::PI * x / mesh.l).sin())
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Random `x (L-x)^2 * sum_k a_k cos(k pi x / L)`, which has finite weighted
/// V norm (`u_x(L) = 0`).
pub fn weighted_corpus(mesh: &Mesh, count: usize, kmax: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|s| {
            let mut rng = CounterRng::new(seed, stream.wrapping_mul(1_000_003).wrapping_add(s as u64));
            let a: Vec<f64> = (0..=kmax).map(|k| rng.normal() / (k + 1) as f64).collect();
            mesh.nodes()
                .iter()
                .map(|&x| {
                    let series: f64 = a
                        .iter()
                        .enumerate()
                        .map(|(k, ak)| ak * (k as f64 * std::f64::consts::PI * x / mesh.l).cos())
                        .sum();
                    x * (mesh.l - x).powi(2) * series
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wnorm_matches_simple_integrals() {
        let mesh = Mesh::new(1.0, 1.0, 999, 8).unwrap();
        let ones = vec![1.0; mesh.n];
        assert!((wnorm(&ones, &mesh, WeightKind::XdX) - 0.5f64.sqrt()).abs() < 2e-3);
        let lmx: Vec<f64> = mesh.nodes().iter().map(|x| 1.0 - x).collect();
        assert!((wnorm(&lmx, &mesh, WeightKind::InvLmXdX) - 0.5f64.sqrt()).abs() < 2e-3);
        assert_eq!(wnorm(&vec![0.0; mesh.n], &mesh, WeightKind::LmXdX), 0.0);
    }

    #[test]
    fn hminus1_of_constant() {
        // -g'' = 1 on (0,1): g = x(1-x)/2, ||g'||^2 = 1/12
        let n = 400;
        let h = 1.0 / (n + 1) as f64;
        let v = hminus1_norm(&vec![1.0; n], h);
        assert!((v - (1.0f64 / 12.0).sqrt()).abs() < 1e-5, "{v}");
    }

    #[test]
    fn coercivity_small_domain_is_positive() {
        let r = coercivity_threshold_check(1.0, 64, 1);
        assert!(r.positive && r.asserted);
        assert!(r.min_ratio > r.bound * 0.95, "{} vs {}", r.min_ratio, r.bound);
        assert!(r.sampled_min >= r.min_ratio - 1e-9);
    }
}
