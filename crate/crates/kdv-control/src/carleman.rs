//! Carleman weight construction and numerical evaluation of both sides of
//! the Carleman and observability inequalities.
//!
//! All weighted integrals are accumulated in log space, because
//! `exp(-2 s phi)` spans hundreds of orders of magnitude over `(0, T)`.

use crate::error::{KdvError, Result};
use crate::mesh::Mesh;
use crate::kdv_solve::Trajectory;
use nalgebra::{SMatrix, SVector};

/// Septic on `[x0, x1]` fixed by value and first three derivatives at both
/// ends.  Coefficients are in the local variable `s = (x - x0)/w`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitePiece {
    pub x0: f64,
    pub w: f64,
    pub c: [f64; 8],
}

impl HermitePiece {
    pub fn new(x0: f64, x1: f64, left: [f64; 4], right: [f64; 4]) -> Result<HermitePiece> {
        let w = x1 - x0;
        let mut m = SMatrix::<f64, 8, 8>::zeros();
        let mut rhs = SVector::<f64, 8>::zeros();
        for d in 0..4 {
            // derivative d of s^p at s = 0 and s = 1
            for p in 0..8 {
                let fall = (0..d).fold(1.0, |acc, q| acc * (p as f64 - q as f64));
                if p == d {
                    m[(d, p)] = fall;
                }
                if p >= d {
                    m[(4 + d, p)] = fall;
                }
            }
            rhs[d] = left[d] * w.powi(d as i32);
            rhs[4 + d] = right[d] * w.powi(d as i32);
        }
        let sol = m.lu().solve(&rhs).ok_or_else(|| KdvError::Invalid("singular Hermite system".into()))?;
        let mut c = [0.0; 8];
        c.iter_mut().zip(sol.iter()).for_each(|(a, b)| *a = *b);
        Ok(HermitePiece { x0, w, c })
    }

    /// Value and first three derivatives at `x`.
    pub fn eval(&self, x: f64) -> [f64; 4] {
        let s = (x - self.x0) / self.w;
        let mut out = [0.0; 4];
        for (d, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in (d..8).rev() {
                let fall = (0..d).fold(1.0, |a, q| a * (p as f64 - q as f64));
                acc = acc * s + self.c[p] * fall;
            }
            *o = acc / self.w.powi(d as i32);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiSpec {
    pub l: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub eps: f64,
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    pub depth: f64,
    pub kappa: f64,
    pub left_piece: HermitePiece,
    pub right_piece: HermitePiece,
}

/// `a = (L - l2)^{-1} (l1^2 + l1 - eps l2^3 - eps l1^3 + eps L^3)`.
pub fn psi_slope(l: f64, l1: f64, l2: f64, eps: f64) -> f64 {
    (l1 * l1 + l1 - eps * l2.powi(3) - eps * l1.powi(3) + eps * l.powi(3)) / (l - l2)
}

impl PsiSpec {
    fn outer_left(&self, x: f64) -> [f64; 4] {
        let e = self.eps;
        [e * x.powi(3) - x * x - x + self.c1, 3.0 * e * x * x - 2.0 * x - 1.0, 6.0 * e * x - 2.0, 6.0 * e]
    }

    fn outer_right(&self, x: f64) -> [f64; 4] {
        let e = self.eps;
        [-e * x.powi(3) + self.a * x + self.c2, -3.0 * e * x * x + self.a, -6.0 * e * x, -6.0 * e]
    }

    /// `psi` and its first three derivatives.
    pub fn eval(&self, x: f64) -> [f64; 4] {
        if x <= self.l1 {
            self.outer_left(x)
        } else if x >= self.l2 {
            self.outer_right(x)
        } else if x <= self.l3 {
            self.left_piece.eval(x)
        } else {
            self.right_piece.eval(x)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }

    pub fn max_value(&self) -> f64 {
        self.c1
    }

    pub fn min_value(&self) -> f64 {
        self.value(self.l3)
    }

    fn build(l: f64, l1: f64, l2: f64, eps: f64, c2: f64, depth: f64, kappa: f64) -> Result<PsiSpec> {
        let a = psi_slope(l, l1, l2, eps);
        let c1 = c2 - eps * l.powi(3) + a * l;
        let l3 = 0.5 * (l1 + l2);
        let mut spec = PsiSpec {
            l,
            l1,
            l2,
            l3,
            eps,
            a,
            c1,
            c2,
            depth,
            kappa,
            left_piece: HermitePiece { x0: l1, w: 1.0, c: [0.0; 8] },
            right_piece: HermitePiece { x0: l3, w: 1.0, c: [0.0; 8] },
        };
        let at_l1 = spec.outer_left(l1);
        let at_l2 = spec.outer_right(l2);
        let mid = [at_l1[0] - depth, 0.0, kappa, 0.0];
        spec.left_piece = HermitePiece::new(l1, l3, at_l1, mid)?;
        spec.right_piece = HermitePiece::new(l3, l2, mid, at_l2)?;
        Ok(spec)
    }

    fn pieces_monotone(&self) -> bool {
        let k = 400;
        (1..k).all(|i| {
            let s = i as f64 / k as f64;
            let xl = self.l1 + s * (self.l3 - self.l1);
            let xr = self.l3 + s * (self.l2 - self.l3);
            self.left_piece.eval(xl)[1] < 0.0 && self.right_piece.eval(xr)[1] > 0.0
        })
    }

    /// Dense check of the conditions `c1`..`c5` of `PsiViolations` and C^3 matching.
    pub fn sample(&self, points: usize) -> PsiViolations {
        let mut v = PsiViolations::default();
        let scale = self.c1.abs().max(1.0);
        let p0 = self.value(0.0);
        let pl = self.value(self.l);
        let p3 = self.value(self.l3);
        let p1 = self.value(self.l1);
        for i in 0..=points {
            let x = self.l * i as f64 / points as f64;
            let [p, d1, d2, d3] = self.eval(x);
            if p <= 0.0 {
                v.c1 += 1;
            }
            let outer = x <= self.l1 || x >= self.l2;
            if outer && !(d1.abs() > 0.0 && d2 < 0.0 && d1 * d3 < 0.0) {
                v.c2 += 1;
            }
            if x > self.l1 && x < self.l2 && (p < p3 - 1e-12 * scale || (x != self.l3 && p >= p1)) {
                v.c4 += 1;
            }
            if p > p0 + 1e-12 * scale {
                v.c4 += 1;
            }
        }
        if !(self.eval(0.0)[1] < 0.0 && self.eval(self.l)[1] > 0.0) {
            v.c3 += 1;
        }
        if (p0 - pl).abs() > 1e-10 * scale || p3 >= p1 {
            v.c4 += 1;
        }
        if p0 >= 4.0 / 3.0 * p3 {
            v.c5 += 1;
        }
        for (x, inner) in [(self.l1, self.left_piece.eval(self.l1)), (self.l2, self.right_piece.eval(self.l2))] {
            let outer = if x == self.l1 { self.outer_left(x) } else { self.outer_right(x) };
            for d in 0..4 {
                let tol = 1e-8 * outer[d].abs().max(1.0);
                if (inner[d] - outer[d]).abs() > tol {
                    v.smoothness += 1;
                }
            }
        }
        v
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PsiViolations {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub c4: usize,
    pub c5: usize,
    pub smoothness: usize,
}

impl PsiViolations {
    pub fn total(&self) -> usize {
        self.c1 + self.c2 + self.c3 + self.c4 + self.c5 + self.smoothness
    }
}

pub const SAMPLER_POINTS: usize = 10_000;

pub fn construct_psi(l: f64, l1: f64, l2: f64) -> Result<PsiSpec> {
    if !(0.0 < l1 && l1 < l2 && l2 < l) {
        return Err(KdvError::Invalid(format!("need 0 < l1 < l2 < L, got ({l1}, {l2}, {l})")));
    }
    // epsilon: psi'' < 0 on [0, l1] needs eps < 1/(3 l1); psi'(L) > 0 needs a > 3 eps L^2
    let eps_max = 1.0 / (3.0 * l1);
    let mut eps = eps_max;
    let margin_ok = |e: f64| {
        let a = psi_slope(l, l1, l2, e);
        6.0 * e * l1 - 2.0 <= -0.5 && a - 3.0 * e * l * l >= 0.5 * a.abs().max(1e-3) && 3.0 * e * l1 * l1 - 2.0 * l1 - 1.0 < 0.0
    };
    let mut tries = 0;
    while !margin_ok(eps) {
        eps *= 0.5;
        tries += 1;
        if tries > 60 {
            return Err(KdvError::Invalid("no admissible eps: slope margins fail".into()));
        }
    }
    let a = psi_slope(l, l1, l2, eps);
    let s_left = (3.0 * eps * l1 * l1 - 2.0 * l1 - 1.0).abs();
    let s_right = -3.0 * eps * l2 * l2 + a;
    let half = 0.5 * (l2 - l1);
    let slope = 0.5 * (s_left + s_right);
    let depth_factors = [0.5, 0.35, 0.7, 0.25, 1.0, 0.15, 1.5];
    let kappa_factors = [1.0, 2.0, 0.5, 3.0, 4.0, 0.25, 6.0];
    for fd in depth_factors {
        for fk in kappa_factors {
            let depth = fd * slope * half;
            let kappa = fk * slope / half;
            let mut c2 = 1.0;
            for _ in 0..80 {
                let spec = PsiSpec::build(l, l1, l2, eps, c2, depth, kappa)?;
                if !spec.pieces_monotone() {
                    break;
                }
                let d = spec.c1 - spec.min_value();
                // psi(0) < 4/3 psi(l3) with 10% slack, and psi > 0
                if spec.min_value() > 0.0 && spec.c1 > 4.4 * d {
                    if spec.sample(SAMPLER_POINTS).total() == 0 {
                        return Ok(spec);
                    }
                    break;
                }
                c2 *= 2.0;
            }
        }
    }
    Err(KdvError::Invalid(format!("no monotone interior extension found for ({l}, {l1}, {l2})")))
}

/// Weights `phi = psi/(t(T-t))`, its reflection, and the time-only
/// `phi_hat`, `phi_check`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanWeight {
    pub psi: PsiSpec,
    pub s: f64,
    pub t: f64,
}

impl CarlemanWeight {
    pub fn new(psi: PsiSpec, s: f64, t: f64) -> Self {
        CarlemanWeight { psi, s, t }
    }

    fn theta(&self, t: f64) -> f64 {
        1.0 / (t * (self.t - t))
    }

    pub fn phi(&self, t: f64, x: f64) -> f64 {
        self.psi.value(x) * self.theta(t)
    }

    pub fn phi_tilde(&self, t: f64, x: f64) -> f64 {
        self.phi(t, self.psi.l - x)
    }

    pub fn phi_hat(&self, t: f64) -> f64 {
        self.psi.value(0.0) * self.theta(t)
    }

    pub fn phi_check(&self, t: f64) -> f64 {
        self.psi.value(self.psi.l3) * self.theta(t)
    }
}

/// Log-space accumulator of a sum of nonnegative terms.
#[derive(Clone, Debug)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, acc: 0.0 }
    }

    /// Adds `exp(lw) * v` for `v >= 0`.
    fn add(&mut self, lw: f64, v: f64) {
        if v <= 0.0 || !lw.is_finite() {
            return;
        }
        let l = lw + v.ln();
        if l > self.max {
            self.acc = self.acc * (self.max - l).exp() + 1.0;
            self.max = l;
        } else {
            self.acc += (l - self.max).exp();
        }
    }

    fn ln(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// Two sides of an inequality, with their natural logs for the cases where
/// the raw values leave the floating-point range.
#[derive(Clone, Debug, PartialEq)]
pub struct Sides {
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ln_lhs: f64,
    pub ln_rhs: f64,
    /// `lhs / rhs`; 0 when both vanish.
    pub ratio: f64,
    pub degenerate: bool,
    pub below_s_min: bool,
}

impl Sides {
    fn from_logs(s: f64, a: &LogSum, b: &LogSum) -> Sides {
        let (la, lb) = (a.ln(), b.ln());
        let degenerate = lb == f64::NEG_INFINITY;
        let ratio = if la == f64::NEG_INFINITY {
            0.0
        } else if degenerate {
            f64::INFINITY
        } else {
            (la - lb).exp()
        };
        Sides { s, lhs: la.exp(), rhs: lb.exp(), ln_lhs: la, ln_rhs: lb, ratio, degenerate, below_s_min: false }
    }
}

/// Nodal values, first and second derivatives on all nodes `0..=n+1`
/// (boundary values from second-order one-sided formulas).
fn profile(u: &[f64], h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = u.len();
    let at = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { u[i - 1] };
    let mut ux = vec![0.0; n + 2];
    let mut uxx = vec![0.0; n + 2];
    for i in 1..=n {
        ux[i] = (at(i + 1) - at(i - 1)) / (2.0 * h);
        uxx[i] = (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h);
    }
    ux[0] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
    uxx[0] = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / (h * h);
    ux[n + 1] = (3.0 * at(n + 1) - 4.0 * at(n) + at(n - 1)) / (2.0 * h);
    uxx[n + 1] = (2.0 * at(n + 1) - 5.0 * at(n) + 4.0 * at(n - 1) - at(n - 2)) / (h * h);
    ((0..n + 2).map(at).collect(), ux, uxx)
}

fn trap_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i == n + 1 {
        0.5 * h
    } else {
        h
    }
}

pub fn in_omega(x: f64, omega: (f64, f64)) -> bool {
    x >= omega.0 && x <= omega.1
}

/// Adds the three weighted terms `(s phi)^{5,3,1} |q, q_x, q_xx|^2 e^{-2 s phi}`
/// at one node.  `sp = s phi` may differ from the exponent's `s phi`.
fn add_triple(acc: &mut LogSum, lw: f64, sp: f64, q: f64, qx: f64, qxx: f64) {
    let lsp = sp.ln();
    acc.add(lw + 5.0 * lsp, q * q);
    acc.add(lw + 3.0 * lsp, qx * qx);
    acc.add(lw + lsp, qxx * qxx);
}

/// Both sides of the Carleman inequality for `q_t + q_xxx = f` with forward
/// boundary conditions.  `f` holds nodal forcing at every time level (or is
/// `None` for zero).  Levels `0` and `m` are excluded.
pub fn carleman_sides_c7(
    q: &Trajectory,
    f: Option<&[Vec<f64>]>,
    w: &CarlemanWeight,
    omega: (f64, f64),
    s_min: f64,
) -> Sides {
    let mesh = &q.mesh;
    let (n, h, s) = (mesh.n, mesh.h, w.s);
    let (mut lhs, mut rhs) = (LogSum::new(), LogSum::new());
    for j in 1..mesh.m {
        let t = mesh.time(j);
        let (u, ux, uxx) = profile(&q.values[j], h);
        for i in 0..=n + 1 {
            let x = mesh.x(i);
            let sp = s * w.phi(t, x);
            let lw = -2.0 * sp + (mesh.dt * trap_weight(i, n, h)).ln();
            add_triple(&mut lhs, lw, sp, u[i], ux[i], uxx[i]);
            if in_omega(x, omega) {
                add_triple(&mut rhs, lw, sp, u[i], ux[i], uxx[i]);
            }
            if let Some(f) = f {
                let fv = if i == 0 || i == n + 1 { 0.0 } else { f[j][i - 1] };
                rhs.add(lw, fv * fv);
            }
        }
        // boundary terms
        let sp0 = s * w.phi(t, 0.0);
        let l0 = -2.0 * sp0 + mesh.dt.ln();
        lhs.add(l0 + sp0.ln(), uxx[0] * uxx[0]);
        lhs.add(l0 + 3.0 * sp0.ln(), ux[0] * ux[0]);
        let spl = s * w.phi(t, mesh.l);
        lhs.add(-2.0 * spl + mesh.dt.ln() + spl.ln(), uxx[n + 1] * uxx[n + 1]);
    }
    let mut out = Sides::from_logs(s, &lhs, &rhs);
    out.below_s_min = s < s_min;
    out
}

/// Global over omega-localized weighted integral for an adjoint solution,
/// with the reflected weight `phi(t, L - x)`.
pub fn carleman_ratio_d60(v: &Trajectory, w: &CarlemanWeight, omega: (f64, f64)) -> Sides {
    let mesh = &v.mesh;
    let (n, h, s) = (mesh.n, mesh.h, w.s);
    let (mut glob, mut loc) = (LogSum::new(), LogSum::new());
    for j in 1..mesh.m {
        let t = mesh.time(j);
        let (u, ux, uxx) = profile(&v.values[j], h);
        for i in 0..=n + 1 {
            let x = mesh.x(i);
            let sp = s * w.phi_tilde(t, x);
            let lw = -2.0 * sp + (mesh.dt * trap_weight(i, n, h)).ln();
            add_triple(&mut glob, lw, sp, u[i], ux[i], uxx[i]);
            if in_omega(x, omega) {
                add_triple(&mut loc, lw, sp, u[i], ux[i], uxx[i]);
            }
        }
    }
    let mut out = Sides::from_logs(s, &glob, &loc);
    if out.ln_lhs == f64::NEG_INFINITY {
        out.degenerate = true;
    }
    out
}

/// Both sides of the refined inequality with time-only weights (constant
/// `C_1 = 1`).
pub fn newcarl_sides(v: &Trajectory, w: &CarlemanWeight, omega: (f64, f64)) -> Sides {
    let mesh = &v.mesh;
    let (n, h, s) = (mesh.n, mesh.h, w.s);
    let (mut lhs, mut rhs) = (LogSum::new(), LogSum::new());
    for j in 1..mesh.m {
        let t = mesh.time(j);
        let (hat, check) = (w.phi_hat(t), w.phi_check(t));
        let (u, ux, uxx) = profile(&v.values[j], h);
        let lw = -2.0 * s * hat;
        let sp = s * check;
        let mut om = 0.0;
        for i in 0..=n + 1 {
            let wq = mesh.dt * trap_weight(i, n, h);
            add_triple(&mut lhs, lw + wq.ln(), sp, u[i], ux[i], uxx[i]);
            if in_omega(mesh.x(i), omega) {
                om += wq * u[i] * u[i];
            }
        }
        rhs.add(10.0 * s.ln() + s * (6.0 * hat - 8.0 * check) + 31.0 * check.ln(), om);
    }
    Sides::from_logs(s, &lhs, &rhs)
}

/// `||v(0)||^2 / int_0^T ||v(t)||^2_{L^2(omega)} dt`.
pub fn observability_ratio_o24(v: &Trajectory, omega: (f64, f64)) -> (f64, bool) {
    let mesh = &v.mesh;
    let v0: f64 = v.initial().iter().map(|x| x * x).sum::<f64>() * mesh.h;
    let levels: Vec<f64> = v
        .values
        .iter()
        .map(|u| {
            u.iter()
                .enumerate()
                .filter(|(i, _)| in_omega(mesh.x(i + 1), omega))
                .map(|(_, x)| x * x)
                .sum::<f64>()
                * mesh.h
        })
        .collect();
    let den = crate::weights::time_trapezoid(&levels, mesh.dt);
    if den == 0.0 {
        if v0 == 0.0 {
            (0.0, true)
        } else {
            (f64::INFINITY, true)
        }
    } else {
        (v0 / den, false)
    }
}

/// Exponent sign of the refined inequality's time weight:
/// `6 psi(0) - 8 psi(l3)`, negative for any admissible spec.
pub fn newcarl_exponent(psi: &PsiSpec) -> f64 {
    6.0 * psi.value(0.0) - 8.0 * psi.value(psi.l3)
}

/// Mesh-independent sanity: returns `min_t phi(t, x) >= 4 psi_min / T^2`.
pub fn weight_lower_bound(w: &CarlemanWeight, mesh: &Mesh) -> f64 {
    4.0 * w.psi.min_value() / (mesh.t * mesh.t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_piece_matches_end_data() {
        let p = HermitePiece::new(0.2, 0.7, [1.0, -2.0, 3.0, 0.5], [0.3, 0.0, 4.0, -1.0]).unwrap();
        let l = p.eval(0.2);
        let r = p.eval(0.7);
        for (a, b) in l.iter().zip([1.0, -2.0, 3.0, 0.5]) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
        for (a, b) in r.iter().zip([0.3, 0.0, 4.0, -1.0]) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn logsum_matches_direct_sum() {
        let mut s = LogSum::new();
        s.add(0.0, 2.0);
        s.add(1.0, 3.0);
        s.add(-700.0, 1.0);
        let want = 2.0 + 3.0 * 1f64.exp();
        assert!((s.ln().exp() - want).abs() < 1e-12 * want);
    }
}
