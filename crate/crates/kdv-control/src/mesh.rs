//! Uniform space-time grid and the banded discretization of `d^3/dx^3 + d/dx`.
//!
//! The third derivative is assembled as `-G^T C G`, where `G` takes nodal
//! values to differences at the half points `x_{j+1/2}` and `C` is a centered
//! difference on the half grid.  The two ghost half-point values encode the
//! boundary conditions: `w_{-1} = w_0` at the left end and `w_{n+1} = -w_n`
//! at the right end (that is, `u_x(L) = 0`).  Interior rows reduce to the
//! standard five-point stencil.  The adjoint operator is the exact negative
//! transpose of the forward one, which carries the conditions
//! `v(0) = v(L) = v_x(0) = 0`.

use crate::band::Band;
use crate::error::{KdvError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub l: f64,
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub dt: f64,
    /// Start time of the window; `times()` are offset by it.
    pub t0: f64,
    /// Implicit-Euler substitutes for Crank-Nicolson on the first/last
    /// interval.  Both are set for a fresh mesh.
    pub damp_first: bool,
    pub damp_last: bool,
}

impl Mesh {
    pub fn new(l: f64, t: f64, n: usize, m: usize) -> Result<Mesh> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(KdvError::Invalid(format!("domain length must be positive, got {l}")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(KdvError::Invalid(format!("horizon must be positive, got {t}")));
        }
        if n < 8 || m < 8 {
            return Err(KdvError::Invalid(format!("need n >= 8 and m >= 8, got n={n}, m={m}")));
        }
        Ok(Mesh {
            l,
            t,
            n,
            m,
            h: l / (n + 1) as f64,
            dt: t / m as f64,
            t0: 0.0,
            damp_first: true,
            damp_last: true,
        })
    }

    /// Node `i` for `i = 0..=n+1`.
    pub fn x(&self, i: usize) -> f64 {
        if i == self.n + 1 {
            self.l
        } else {
            i as f64 * self.h
        }
    }

    /// Interior nodes `x_1..x_n`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.x(i)).collect()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + if j == self.m { self.t } else { j as f64 * self.dt }
    }

    /// Implicit weights `(a, b)` of interval `k`: the step solves
    /// `(I + a D) u^{k+1} = (I - b D) u^k + dt F_k`.
    pub fn theta(&self, k: usize) -> (f64, f64) {
        if (k == 0 && self.damp_first) || (k + 1 == self.m && self.damp_last) {
            (self.dt, 0.0)
        } else {
            (0.5 * self.dt, 0.5 * self.dt)
        }
    }

    /// Interval value `(a q^{k+1} + b q^k) / dt` of a nodal field.
    pub fn theta_mix(&self, k: usize, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let (a, b) = self.theta(k);
        let (a, b) = (a / self.dt, b / self.dt);
        lo.iter().zip(hi).map(|(p, q)| a * q + b * p).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.m).map(|j| self.time(j)).collect()
    }

    /// Same spacing, `k - 1` interior nodes: the subdomain `(0, k h)`.
    pub fn subdomain(&self, k: usize) -> Result<Mesh> {
        if k < 9 || k > self.n + 1 {
            return Err(KdvError::Invalid(format!("subdomain node index {k} out of range")));
        }
        Ok(Mesh { l: self.x(k), n: k - 1, ..self.clone() })
    }

    /// Levels `j0..=j1` of this mesh, keeping its step pattern so that the
    /// windows of a split run reproduce the full run.
    pub fn time_window(&self, j0: usize, j1: usize) -> Result<Mesh> {
        if j1 <= j0 || j1 > self.m || j1 - j0 < 8 {
            return Err(KdvError::Invalid(format!("bad time window {j0}..{j1}")));
        }
        Ok(Mesh {
            t: (j1 - j0) as f64 * self.dt,
            m: j1 - j0,
            t0: self.time(j0),
            damp_first: self.damp_first && j0 == 0,
            damp_last: self.damp_last && j1 == self.m,
            ..self.clone()
        })
    }

    /// Total window length `t` measured from `t0`.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BcTag {
    Forward,
    Adjoint,
    /// Forward conditions on `(0, l2p)` plus a Neumann control `u_x(l2p) = g`.
    SubdomainForward(f64),
}

#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub bc: BcTag,
    pub n: usize,
    pub h: f64,
    /// Third-derivative part.
    pub d3: Band,
    /// Centered first derivative (skew-symmetric).
    pub d1: Band,
}

fn third_derivative_forward(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let at = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { u[i - 1] };
    let w: Vec<f64> = (0..=n).map(|j| (at(j + 1) - at(j)) / h).collect();
    let wg = |j: isize| -> f64 {
        if j < 0 {
            w[0]
        } else if j as usize > n {
            -w[n]
        } else {
            w[j as usize]
        }
    };
    let c: Vec<f64> = (0..=n as isize).map(|j| (wg(j + 1) - wg(j - 1)) / (2.0 * h)).collect();
    (1..=n).map(|i| (c[i] - c[i - 1]) / h).collect()
}

fn centered_first(n: usize, h: f64) -> Band {
    let mut b = Band::zeros(n, 1, 1);
    for i in 0..n {
        if i + 1 < n {
            b.add(i, i + 1, 0.5 / h);
        }
        if i > 0 {
            b.add(i, i - 1, -0.5 / h);
        }
    }
    b
}

fn forward_d3(n: usize, h: f64) -> Band {
    let mut b = Band::zeros(n, 2, 2);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = third_derivative_forward(&e, h);
        for (i, v) in col.iter().enumerate() {
            if *v != 0.0 {
                b.add(i, j, *v);
            }
        }
        e[j] = 0.0;
    }
    b
}

pub fn build_operator(mesh: &Mesh, bc: BcTag) -> Result<DiscreteOperator> {
    let (n, h) = (mesh.n, mesh.h);
    let d1 = centered_first(n, h);
    let d3 = match bc {
        BcTag::Forward => forward_d3(n, h),
        BcTag::Adjoint => forward_d3(n, h).transpose().scaled(-1.0),
        BcTag::SubdomainForward(l2p) => {
            if (l2p - mesh.l).abs() > 1e-12 * mesh.l.max(1.0) {
                return Err(KdvError::Invalid(format!(
                    "subdomain tag length {l2p} does not match mesh length {}",
                    mesh.l
                )));
            }
            forward_d3(n, h)
        }
    };
    Ok(DiscreteOperator { bc, n, h, d3, d1 })
}

impl DiscreteOperator {
    /// The operator of the adjoint problem, `-self^T`, carrying
    /// `v(0) = v(L) = v_x(0) = 0`.
    pub fn adjoint(&self) -> DiscreteOperator {
        let bc = if self.is_adjoint() { BcTag::Forward } else { BcTag::Adjoint };
        DiscreteOperator { bc, n: self.n, h: self.h, d3: self.d3.transpose().scaled(-1.0), d1: self.d1.clone() }
    }

    pub fn is_adjoint(&self) -> bool {
        matches!(self.bc, BcTag::Adjoint)
    }

    /// The matrix of `d^3 + (xi .)_x` (forward tags) or `d^3 + xi d/dx`
    /// (adjoint tag) for a frozen potential.
    pub fn with_potential(&self, xi: &PotentialSlice) -> Band {
        match xi {
            PotentialSlice::Const(c) if *c == 0.0 => self.d3.clone(),
            PotentialSlice::Const(c) => self.d3.combine(1.0, &self.d1, *c),
            PotentialSlice::Field(v) => {
                let t = if self.is_adjoint() { self.d1.mul_diag_left(v) } else { self.d1.mul_diag_right(v) };
                self.d3.combine(1.0, &t, 1.0)
            }
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let a = self.d3.matvec(u);
        let b = self.d1.matvec(u);
        a.iter().zip(&b).map(|(p, q)| p + q).collect()
    }

    /// Second-order one-sided `u_x(0)` from interior values (`u_0 = 0`).
    pub fn trace_left(&self, u: &[f64]) -> f64 {
        (4.0 * u[0] - u[1]) / (2.0 * self.h)
    }

    /// Second-order one-sided `u_x(L)` from interior values (`u_{n+1} = 0`).
    pub fn trace_right(&self, u: &[f64]) -> f64 {
        let n = u.len();
        (-4.0 * u[n - 1] + u[n - 2]) / (2.0 * self.h)
    }

    pub fn second_left(&self, u: &[f64]) -> f64 {
        (-5.0 * u[0] + 4.0 * u[1] - u[2]) / (self.h * self.h)
    }

    pub fn second_right(&self, u: &[f64]) -> f64 {
        let n = u.len();
        (-5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) / (self.h * self.h)
    }

    /// Weight of the Neumann datum in the last equation: the source term is
    /// `control_weight() * g` at node `n`.
    pub fn control_weight(&self) -> f64 {
        -1.0 / (self.h * self.h)
    }
}

/// Potential frozen on one time interval.
#[derive(Clone, Debug)]
pub enum PotentialSlice {
    Const(f64),
    Field(Vec<f64>),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_arithmetic() {
        let m = Mesh::new(1.0, 1.0, 9, 10).unwrap();
        assert!((m.h - 0.1).abs() < 1e-15 && (m.dt - 0.1).abs() < 1e-15);
        let m = Mesh::new(2.0 * std::f64::consts::PI, 1.0, 127, 256).unwrap();
        assert!((m.h - 2.0 * std::f64::consts::PI / 128.0).abs() < 1e-15);
        assert!(Mesh::new(1.0, 1.0, 4, 10).is_err());
        assert!(Mesh::new(-1.0, 1.0, 9, 10).is_err());
        assert!(Mesh::new(1.0, 0.0, 9, 10).is_err());
    }

    #[test]
    fn interior_rows_are_five_point() {
        let m = Mesh::new(1.0, 1.0, 20, 10).unwrap();
        let op = build_operator(&m, BcTag::Forward).unwrap();
        let h3 = m.h.powi(3);
        let row = 10;
        let want = [-0.5, 1.0, 0.0, -1.0, 0.5];
        for (k, w) in want.iter().enumerate() {
            let got = op.d3.get(row, row + k - 2) * h3;
            assert!((got - w).abs() < 1e-12, "{k}: {got}");
        }
    }

    #[test]
    fn adjoint_is_negative_transpose() {
        let m = Mesh::new(1.3, 1.0, 15, 10).unwrap();
        let f = build_operator(&m, BcTag::Forward).unwrap();
        let a = build_operator(&m, BcTag::Adjoint).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                let s = f.d3.get(i, j) + a.d3.get(j, i);
                let t = f.d1.get(i, j) + a.d1.get(j, i);
                assert!(s.abs() < 1e-9 && t.abs() < 1e-12);
            }
        }
    }
}
