//! Square band matrices and their LU factorization with partial pivoting.

use crate::error::{KdvError, Result};

/// Square `n x n` matrix with `kl` sub-diagonals and `ku` super-diagonals,
/// stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl Band {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Band { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Band::zeros(n, 0, 0);
        b.data.iter_mut().for_each(|v| *v = 1.0);
        b
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    /// Widens the stored band without changing the matrix.
    pub fn widen(&self, kl: usize, ku: usize) -> Band {
        let mut out = Band::zeros(self.n, kl.max(self.kl), ku.max(self.ku));
        for i in 0..self.n {
            for j in self.row_range(i) {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.add(i, j, v);
                }
            }
        }
        out
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    /// `alpha * self + beta * other`, with the band grown to fit both.
    pub fn combine(&self, alpha: f64, other: &Band, beta: f64) -> Band {
        assert_eq!(self.n, other.n);
        let mut out = Band::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.add(i, j, alpha * self.get(i, j));
            }
            for j in other.row_range(i) {
                out.add(i, j, beta * other.get(i, j));
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Band {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + c * I`.
    pub fn shift(&self, c: f64) -> Band {
        let mut out = self.clone();
        for i in 0..self.n {
            out.add(i, i, c);
        }
        out
    }

    /// Right-multiplies by `diag(d)`.
    pub fn mul_diag_right(&self, d: &[f64]) -> Band {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        let w = self.width();
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.data[i * w + j + self.kl - i] *= d[j];
            }
        }
        out
    }

    /// Left-multiplies by `diag(d)`.
    pub fn mul_diag_left(&self, d: &[f64]) -> Band {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        let w = self.width();
        for i in 0..self.n {
            for v in &mut out.data[i * w..(i + 1) * w] {
                *v *= d[i];
            }
        }
        out
    }

    pub fn transpose(&self) -> Band {
        let mut out = Band::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.add(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in self.row_range(i) {
                acc += row[j + self.kl - i] * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

/// LU factors of a band matrix (LAPACK `gbtrf` layout: U carries `kl + ku`
/// super-diagonals after pivoting).
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn w(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.w() + j + self.kl - i
    }

    pub fn factor(m: &Band) -> Result<BandLu> {
        let (n, kl, ku) = (m.n, m.kl, m.ku);
        let mut f = BandLu { n, kl, ku, a: vec![0.0; n * (2 * kl + ku + 1)], piv: vec![0; n] };
        for i in 0..n {
            for j in m.row_range(i) {
                let k = f.idx(i, j);
                f.a[k] = m.get(i, j);
            }
        }
        let uw = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = f.a[f.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = f.a[f.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(KdvError::Singular { row: k });
            }
            f.piv[k] = p;
            let jmax = (k + uw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (f.idx(k, j), f.idx(p, j));
                    f.a.swap(a, b);
                }
            }
            let pivot = f.a[f.idx(k, k)];
            for i in k + 1..=last {
                let ik = f.idx(i, k);
                let l = f.a[ik] / pivot;
                f.a[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = f.a[f.idx(k, j)];
                        let ij = f.idx(i, j);
                        f.a[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.a[self.idx(i, k)] * bk;
                }
            }
        }
        let uw = self.kl + self.ku;
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + uw).min(n - 1) {
                acc -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.a[self.idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    #[test]
    fn solve_recovers_known_vector() {
        let n = 12;
        let mut m = Band::zeros(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                // small diagonal forces pivoting
                let v = if i == j { 0.01 * (i as f64 + 1.0) } else { 1.0 + 0.1 * (i + 2 * j) as f64 };
                m.add(i, j, v);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let b = m.matvec(&x);
        let y = m.lu().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn transpose_and_dense_agree() {
        let mut m = Band::zeros(6, 1, 2);
        for i in 0..6usize {
            for j in i.saturating_sub(1)..(i + 3).min(6) {
                m.add(i, j, (i * 6 + j) as f64);
            }
        }
        let t = m.transpose();
        let x = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let d = m.to_dense();
        let dt: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| d[j][i]).collect()).collect();
        assert_eq!(t.matvec(&x), dense_matvec(&dt, &x));
        assert_eq!(m.matvec(&x), dense_matvec(&d, &x));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = Band::zeros(4, 1, 1);
        assert!(matches!(m.lu(), Err(KdvError::Singular { .. })));
    }
}
