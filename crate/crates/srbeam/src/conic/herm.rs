use nalgebra::{DMatrix, SymmetricEigen};

use super::{ConeKind, ConicProgram, LinExpr};
use crate::error::{Error, Result};
use crate::model::{CMat, CVec, C64};

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    asymmetry(a) <= tol * (1.0 + a.norm())
}

fn asymmetry(a: &CMat) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    (a - a.adjoint()).norm()
}

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]`.
pub fn hermitian_to_real_psd(h: &CMat) -> Result<DMatrix<f64>> {
    if !is_hermitian(h, 1e-10) {
        return Err(Error::NotHermitian(asymmetry(h)));
    }
    let n = h.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let v = h[(r, c)];
            m[(r, c)] = v.re;
            m[(r + n, c + n)] = v.re;
            m[(r, c + n)] = -v.im;
            m[(r + n, c)] = v.im;
        }
    }
    Ok(m)
}

/// Largest eigenvalue and a unit eigenvector whose first nonzero entry is real positive.
pub fn max_eigpair(a: &CMat) -> Result<(f64, CVec)> {
    if !is_hermitian(a, 1e-10) {
        return Err(Error::NotHermitian(asymmetry(a)));
    }
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let k = eig.eigenvalues.imax();
    let lambda = eig.eigenvalues[k];
    let mut v: CVec = eig.eigenvectors.column(k).into_owned();
    let big = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-9 * big).copied() {
        v *= z.conj() / z.norm();
    }
    let nv = v.norm();
    v /= C64::new(nv, 0.0);
    Ok((lambda, v))
}

/// `(Tr X − λ_max) / Tr X`, zero for a zero matrix.
pub fn rank_residual(x: &CMat) -> f64 {
    let tr = x.trace().re;
    if !(tr > 0.0) {
        return 0.0;
    }
    let sym = (x + x.adjoint()) * C64::new(0.5, 0.0);
    let lmax = SymmetricEigen::new(sym).eigenvalues.max();
    ((tr - lmax) / tr).clamp(0.0, 1.0)
}

/// A Hermitian matrix variable `X = A + iB` stored as the upper triangle of
/// `A` and the strict upper triangle of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermVar {
    pub n: usize,
    re: Vec<usize>,
    im: Vec<usize>,
}

fn upper_index(n: usize, r: usize, c: usize) -> usize {
    // row-major packing of the upper triangle
    r * n - r * (r + 1) / 2 + c
}

fn strict_index(n: usize, r: usize, c: usize) -> usize {
    upper_index(n, r, c) - r - 1
}

impl HermVar {
    pub fn new(prog: &mut ConicProgram, n: usize, name: &str) -> Self {
        let mut re = Vec::new();
        let mut im = Vec::new();
        for r in 0..n {
            for c in r..n {
                re.push(prog.add_var(format!("{name}.re[{r},{c}]")));
            }
        }
        for r in 0..n {
            for c in r + 1..n {
                im.push(prog.add_var(format!("{name}.im[{r},{c}]")));
            }
        }
        Self { n, re, im }
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.re.iter().chain(self.im.iter()).copied()
    }

    pub fn re(&self, r: usize, c: usize) -> LinExpr {
        let (a, b) = if r <= c { (r, c) } else { (c, r) };
        LinExpr::var(self.re[upper_index(self.n, a, b)])
    }

    /// Imaginary part of entry `(r, c)`.
    pub fn im(&self, r: usize, c: usize) -> LinExpr {
        if r == c {
            LinExpr::default()
        } else if r < c {
            LinExpr::var(self.im[strict_index(self.n, r, c)])
        } else {
            LinExpr::term(self.im[strict_index(self.n, c, r)], -1.0)
        }
    }

    pub fn trace(&self) -> LinExpr {
        LinExpr::sum((0..self.n).map(|k| self.re(k, k)))
    }

    /// `Re Tr(X·H)` for a Hermitian constant `H`.
    pub fn trace_with(&self, h: &CMat) -> LinExpr {
        let mut e = LinExpr::default();
        for k in 0..self.n {
            e.add_term(self.re[upper_index(self.n, k, k)], h[(k, k)].re);
            for l in k + 1..self.n {
                let v = h[(k, l)];
                e.add_term(self.re[upper_index(self.n, k, l)], 2.0 * v.re);
                e.add_term(self.im[strict_index(self.n, k, l)], 2.0 * v.im);
            }
        }
        e.compact()
    }

    /// Upper triangle of the real embedding, column by column.
    pub fn psd_rows(&self) -> Vec<LinExpr> {
        let n = self.n;
        let mut rows = Vec::with_capacity(n * (2 * n + 1));
        for c in 0..2 * n {
            for r in 0..=c {
                let e = match (r < n, c < n) {
                    (true, true) => self.re(r, c),
                    (true, false) => -self.im(r, c - n),
                    (false, false) => self.re(r - n, c - n),
                    (false, true) => unreachable!(),
                };
                rows.push(e);
            }
        }
        rows
    }

    pub fn add_psd(&self, prog: &mut ConicProgram, label: &str) {
        prog.add_block(ConeKind::Psd(2 * self.n), self.psd_rows(), label);
    }

    pub fn value(&self, x: &[f64]) -> CMat {
        let n = self.n;
        CMat::from_fn(n, n, |r, c| C64::new(self.re(r, c).eval(x), self.im(r, c).eval(x)))
    }

    /// Writes `m` into a variable vector.
    pub fn assign(&self, m: &CMat, x: &mut [f64]) {
        for r in 0..self.n {
            for c in r..self.n {
                x[self.re[upper_index(self.n, r, c)]] = m[(r, c)].re;
                if c > r {
                    x[self.im[strict_index(self.n, r, c)]] = m[(r, c)].im;
                }
            }
        }
    }
}
