//! Second-order cone chain bounding `1 + Ξ ≥ e^z` from below.
//!
//! With `y = z/2^M` the chain builds the fourth-order Taylor polynomial of
//! `e^y` and squares it `M` times.

use super::{ConicProgram, LinExpr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpChain {
    /// Auxiliaries `ζ_1 … ζ_{M+4}`.
    pub zeta: Vec<usize>,
    pub soc_rows: usize,
    pub linear_rows: usize,
}

/// Emits the chain over `z` and caps it with `cap ≥ ζ_{M+4}`.
///
/// `cap` is `1 + Ξ` in the plain form. The cap row is a separate nonnegative
/// block labelled `exp-cap`.
pub fn exp_soc_chain(prog: &mut ConicProgram, z: &LinExpr, cap: &LinExpr, m: u32) -> Result<ExpChain> {
    if m < 1 {
        return Err(Error::InvalidArgument("approximation coefficient must be at least 1".into()));
    }
    let m = m as usize;
    let zeta: Vec<usize> = (1..=m + 4).map(|q| prog.add_var(format!("zeta{q}"))).collect();
    let zv = |q: usize| LinExpr::var(zeta[q - 1]);
    let pow = 0.5f64.powi(m as i32);
    // ζ1 ≥ (1 + z/2^M)²
    prog.square_le(z.clone() * pow + 1.0, zv(1), "exp-chain");
    // ζ2 ≥ (5/6 + z/2^(M+1))²
    prog.square_le(z.clone() * (0.5 * pow) + 5.0 / 6.0, zv(2), "exp-chain");
    // ζ3 ≥ ζ1²
    prog.square_le(zv(1), zv(3), "exp-chain");
    // ζ4 ≥ ζ2 + ζ3/24 + 19/72
    prog.nonneg(zv(4) - zv(2) - zv(3) * (1.0 / 24.0) - 19.0 / 72.0, "exp-combine");
    for q in 5..=m + 4 {
        prog.square_le(zv(q - 1), zv(q), "exp-chain");
    }
    prog.nonneg(cap.clone() - zv(m + 4), "exp-cap");
    Ok(ExpChain { zeta, soc_rows: 3 + m, linear_rows: 1 })
}

/// Values `ζ_1 … ζ_{M+4}` with every chain inequality at equality.
pub fn tight_chain(z: f64, m: u32) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::InvalidArgument("approximation coefficient must be at least 1".into()));
    }
    let y = z / 2f64.powi(m as i32);
    let mut out = Vec::with_capacity(m as usize + 4);
    let z1 = (1.0 + y).powi(2);
    let z2 = (5.0 / 6.0 + y / 2.0).powi(2);
    let z3 = z1 * z1;
    let z4 = z2 + z3 / 24.0 + 19.0 / 72.0;
    out.extend([z1, z2, z3, z4]);
    let mut cur = z4;
    for _ in 0..m {
        cur *= cur;
        out.push(cur);
    }
    Ok(out)
}
