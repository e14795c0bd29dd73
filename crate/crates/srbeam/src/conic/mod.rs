//! Conic programs in standard form and their solution.
//!
//! A program minimizes a linear objective subject to blocks of affine rows,
//! each block required to lie in one cone.

mod expchain;
mod herm;
mod solve;

pub use expchain::{exp_soc_chain, tight_chain, ExpChain};
pub use herm::{hermitian_to_real_psd, is_hermitian, max_eigpair, rank_residual, HermVar};
pub use solve::{solve, ConicSolution, SolveStatus};

use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};

/// Affine expression `Σ a_k x_k + b`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: usize, a: f64) -> Self {
        Self { terms: vec![(v, a)], constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v]).sum::<f64>() + self.constant
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: usize, a: f64) {
        self.terms.push((v, a));
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (v, a) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => out.push((v, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self { terms: out, constant: self.constant }
    }

    pub fn sum<I: IntoIterator<Item = LinExpr>>(it: I) -> Self {
        it.into_iter().fold(LinExpr::default(), |a, b| a + b)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl AddAssign for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + rhs.scaled(-1.0)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

impl Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(self, c: f64) -> LinExpr {
        self.plus_const(c)
    }
}

impl Sub<f64> for LinExpr {
    type Output = LinExpr;
    fn sub(self, c: f64) -> LinExpr {
        self.plus_const(-c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Every row equals zero.
    Zero,
    /// Every row is nonnegative.
    Nonneg,
    /// `r0 ≥ ‖(r1, …)‖`.
    Soc,
    /// `2·r0·r1 ≥ ‖(r2, …)‖²`, `r0, r1 ≥ 0`.
    RotatedSoc,
    /// Rows are the upper triangle of a symmetric matrix of this order,
    /// column by column, and the matrix must be PSD.
    Psd(usize),
}

impl ConeKind {
    fn tag(&self) -> String {
        match self {
            ConeKind::Zero => "zero".into(),
            ConeKind::Nonneg => "nonneg".into(),
            ConeKind::Soc => "soc".into(),
            ConeKind::RotatedSoc => "rsoc".into(),
            ConeKind::Psd(n) => format!("psd{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<LinExpr>,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    names: Vec<String>,
    objective: LinExpr,
    blocks: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn add_vars(&mut self, n: usize, prefix: &str) -> Vec<usize> {
        (0..n).map(|k| self.add_var(format!("{prefix}[{k}]"))).collect()
    }

    pub fn variable_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn add_objective(&mut self, e: LinExpr) {
        self.objective += e;
    }

    pub fn add_block(&mut self, kind: ConeKind, rows: Vec<LinExpr>, label: impl Into<String>) {
        self.blocks.push(ConeBlock {
            kind,
            rows: rows.into_iter().map(LinExpr::compact).collect(),
            label: label.into(),
        });
    }

    pub fn nonneg(&mut self, e: LinExpr, label: &str) {
        self.add_block(ConeKind::Nonneg, vec![e], label);
    }

    pub fn equal(&mut self, a: LinExpr, b: LinExpr, label: &str) {
        self.add_block(ConeKind::Zero, vec![a - b], label);
    }

    pub fn soc(&mut self, head: LinExpr, tail: Vec<LinExpr>, label: &str) {
        let mut rows = vec![head];
        rows.extend(tail);
        self.add_block(ConeKind::Soc, rows, label);
    }

    /// `‖w‖² ≤ r`, lowered to `((1+r)/2, (r−1)/2, w) ∈ SOC`.
    pub fn quad_le(&mut self, w: Vec<LinExpr>, r: LinExpr, label: &str) {
        let head = (r.clone() + 1.0) * 0.5;
        let mut tail = vec![(r - 1.0) * 0.5];
        tail.extend(w);
        self.soc(head, tail, label);
    }

    /// `‖w‖² ≤ r` emitted as `‖w/√μ‖² ≤ r/μ`, for rows whose natural size is `μ`.
    pub fn quad_le_scaled(&mut self, w: Vec<LinExpr>, r: LinExpr, mu: f64, label: &str) {
        let k = 1.0 / mu.sqrt();
        self.quad_le(w.into_iter().map(|e| e * k).collect(), r * (1.0 / mu), label);
    }

    /// `w² ≤ a` as the single row `1+a ≥ ‖(1−a, 2w)‖`.
    pub fn square_le(&mut self, w: LinExpr, a: LinExpr, label: &str) {
        let head = a.clone() + 1.0;
        let tail = vec![LinExpr::constant(1.0) - a, w * 2.0];
        self.soc(head, tail, label);
    }

    pub fn count(&self, kind: ConeKind) -> usize {
        self.blocks.iter().filter(|b| b.kind == kind).count()
    }

    pub fn count_labelled(&self, label: &str) -> usize {
        self.blocks.iter().filter(|b| b.label == label).count()
    }

    pub fn evaluate_objective(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest cone violation of `x` over all blocks, computed without the solver.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.blocks.iter().map(|b| block_violation(b, x)).fold(0.0, f64::max)
    }

    /// Plain-text standard form, one cone block per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vars {}", self.names.len());
        let _ = writeln!(s, "minimize {}", fmt_expr(&self.objective, &self.names));
        for b in &self.blocks {
            let rows: Vec<String> = b.rows.iter().map(|r| fmt_expr(r, &self.names)).collect();
            let _ = writeln!(s, "{} {} [{}] {}", b.kind.tag(), b.rows.len(), b.label, rows.join(" ; "));
        }
        s
    }

    pub(crate) fn check_well_formed(&self) -> Result<(), String> {
        if self.names.is_empty() {
            return Err("program has no variables".into());
        }
        for b in &self.blocks {
            let ok = match b.kind {
                ConeKind::Zero | ConeKind::Nonneg => !b.rows.is_empty(),
                ConeKind::Soc => !b.rows.is_empty(),
                ConeKind::RotatedSoc => b.rows.len() >= 2,
                ConeKind::Psd(n) => n >= 1 && b.rows.len() == n * (n + 1) / 2,
            };
            if !ok {
                return Err(format!("block '{}' has inconsistent dimension", b.label));
            }
            if b.rows.iter().flat_map(|r| &r.terms).any(|&(v, a)| v >= self.names.len() || !a.is_finite())
                || b.rows.iter().any(|r| !r.constant.is_finite())
            {
                return Err(format!("block '{}' references bad data", b.label));
            }
        }
        if self.objective.terms.iter().any(|&(v, a)| v >= self.names.len() || !a.is_finite()) {
            return Err("objective references bad data".into());
        }
        Ok(())
    }
}

fn fmt_expr(e: &LinExpr, names: &[String]) -> String {
    let mut parts: Vec<String> = e.terms.iter().map(|&(v, a)| format!("{a:+e}*{}", names[v])).collect();
    parts.push(format!("{:+e}", e.constant));
    parts.join(" ")
}

/// Upper-triangle column-major entries back into a dense symmetric matrix.
pub fn unpack_symmetric(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for c in 0..n {
        for r in 0..=c {
            m[(r, c)] = vals[k];
            m[(c, r)] = vals[k];
            k += 1;
        }
    }
    m
}

fn block_violation(b: &ConeBlock, x: &[f64]) -> f64 {
    let v: Vec<f64> = b.rows.iter().map(|r| r.eval(x)).collect();
    match b.kind {
        ConeKind::Zero => v.iter().map(|a| a.abs()).fold(0.0, f64::max),
        ConeKind::Nonneg => v.iter().map(|a| (-a).max(0.0)).fold(0.0, f64::max),
        ConeKind::Soc => {
            let tail = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
            (tail - v[0]).max(0.0)
        }
        ConeKind::RotatedSoc => {
            let (u, w) = (v[0], v[1]);
            let tail = v[2..].iter().map(|a| a * a).sum::<f64>();
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let head = s * (u + w);
            let t = (tail + (s * (u - w)).powi(2)).sqrt();
            (t - head).max(0.0)
        }
        ConeKind::Psd(n) => {
            let m = unpack_symmetric(n, &v);
            let eig = SymmetricEigen::new(m);
            (-eig.eigenvalues.min()).max(0.0)
        }
    }
}
