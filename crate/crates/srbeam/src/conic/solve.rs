use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{ConeKind, ConicProgram, LinExpr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Reduced accuracy; check `primal_residual` before use.
    Inaccurate,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest cone violation of `x`, measured independently of the backend.
    pub primal_residual: f64,
    /// `1 + max|x_k|`.
    pub scale: f64,
    pub dual_residual: f64,
    pub iterations: u32,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Rows in backend order with the cone list.
fn lower(prog: &ConicProgram) -> (Vec<LinExpr>, Vec<SupportedConeT<f64>>) {
    let mut rows = Vec::new();
    let mut cones = Vec::new();
    for b in prog.blocks() {
        match b.kind {
            ConeKind::Zero => {
                cones.push(SupportedConeT::ZeroConeT(b.rows.len()));
                rows.extend(b.rows.iter().cloned());
            }
            ConeKind::Nonneg => {
                cones.push(SupportedConeT::NonnegativeConeT(b.rows.len()));
                rows.extend(b.rows.iter().cloned());
            }
            ConeKind::Soc => {
                cones.push(SupportedConeT::SecondOrderConeT(b.rows.len()));
                rows.extend(b.rows.iter().cloned());
            }
            ConeKind::RotatedSoc => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let (u, v) = (&b.rows[0], &b.rows[1]);
                cones.push(SupportedConeT::SecondOrderConeT(b.rows.len()));
                rows.push((u.clone() + v.clone()) * s);
                rows.push((u.clone() - v.clone()) * s);
                rows.extend(b.rows[2..].iter().cloned());
            }
            ConeKind::Psd(n) => {
                cones.push(SupportedConeT::PSDTriangleConeT(n));
                let mut k = 0;
                for c in 0..n {
                    for r in 0..=c {
                        let row = b.rows[k].clone();
                        rows.push(if r == c { row } else { row * SQRT2 });
                        k += 1;
                    }
                }
            }
        }
    }
    (rows, cones)
}

fn csc_from_rows(rows: &[LinExpr], n: usize) -> CscMatrix<f64> {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, r) in rows.iter().enumerate() {
        for &(v, a) in &r.terms {
            if a != 0.0 {
                cols[v].push((i, -a));
            }
        }
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for c in cols.iter_mut() {
        c.sort_by_key(|t| t.0);
        for &(i, a) in c.iter() {
            rowval.push(i);
            nzval.push(a);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows.len(), n, colptr, rowval, nzval)
}

/// Solves the program with an interior-point backend.
///
/// Reduced-accuracy backend results count as optimal only if the
/// independent cone check passes at `10·tol`.
pub fn solve(prog: &ConicProgram, tol: f64, max_iter: u32) -> Result<ConicSolution> {
    prog.check_well_formed().map_err(Error::IllPosed)?;
    if prog.objective().terms.is_empty() && prog.blocks().is_empty() {
        return Err(Error::IllPosed("empty objective and no constraints".into()));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("tolerance and iteration cap must be positive".into()));
    }
    let n = prog.variable_count();
    let (rows, cones) = lower(prog);
    let a = csc_from_rows(&rows, n);
    let b: Vec<f64> = rows.iter().map(|r| r.constant).collect();
    let mut q = vec![0.0; n];
    for &(v, c) in &prog.objective().terms {
        q[v] += c;
    }
    let p = CscMatrix::<f64>::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(max_iter)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .build()
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let primal_residual = if x.iter().all(|v| v.is_finite()) { prog.max_violation(&x) } else { f64::INFINITY };
    let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if primal_residual <= 10.0 * tol * scale => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if primal_residual.is_finite() => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::MaxIter,
    };
    Ok(ConicSolution {
        status,
        objective: prog.evaluate_objective(&x),
        x,
        primal_residual,
        scale,
        dual_residual: sol.r_dual,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_lower_bound() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x");
        p.add_objective(LinExpr::var(x));
        p.nonneg(LinExpr::var(x) - 1.0, "lb");
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn soc_norm() {
        let mut p = ConicProgram::new();
        let t = p.add_var("t");
        p.add_objective(LinExpr::var(t));
        p.soc(LinExpr::var(t), vec![LinExpr::constant(3.0), LinExpr::constant(4.0)], "n");
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 5.0).abs() < 1e-7);
    }

    #[test]
    fn psd_corner() {
        let mut p = ConicProgram::new();
        let v = p.add_vars(3, "X");
        p.add_objective(LinExpr::var(v[0]) + LinExpr::var(v[2]));
        p.equal(LinExpr::var(v[0]), LinExpr::constant(1.0), "x11");
        p.add_block(ConeKind::Psd(2), v.iter().map(|&k| LinExpr::var(k)).collect(), "psd");
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-6);
        assert!((s.x[0] - 1.0).abs() < 1e-7 && s.x[1].abs() < 1e-4 && s.x[2].abs() < 1e-6);
    }

    #[test]
    fn rotated_cone_solves() {
        // min u s.t. 2·u·1 ≥ 3²
        let mut p = ConicProgram::new();
        let u = p.add_var("u");
        p.add_objective(LinExpr::var(u));
        p.add_block(
            ConeKind::RotatedSoc,
            vec![LinExpr::var(u), LinExpr::constant(1.0), LinExpr::constant(3.0)],
            "r",
        );
        let s = solve(&p, 1e-9, 100).unwrap();
        assert!((s.x[0] - 4.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x");
        p.add_objective(LinExpr::var(x));
        p.nonneg(LinExpr::var(x) - 2.0, "a");
        p.nonneg(LinExpr::constant(1.0) - LinExpr::var(x), "b");
        assert_eq!(solve(&p, 1e-8, 100).unwrap().status, SolveStatus::Infeasible);
        let mut q = ConicProgram::new();
        let y = q.add_var("y");
        q.add_objective(LinExpr::var(y));
        q.nonneg(LinExpr::constant(1.0) - LinExpr::var(y), "ub");
        assert_eq!(solve(&q, 1e-8, 100).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn ill_posed() {
        assert!(solve(&ConicProgram::new(), 1e-8, 100).is_err());
    }

    #[test]
    fn quadratic_lowering() {
        // min r s.t. (x-3)² ≤ r, x free → r = 0
        let mut p = ConicProgram::new();
        let x = p.add_var("x");
        let r = p.add_var("r");
        p.add_objective(LinExpr::var(r) + LinExpr::var(x) * 0.0);
        p.quad_le(vec![LinExpr::var(x) - 3.0], LinExpr::var(r), "q");
        p.nonneg(LinExpr::constant(1.0) - LinExpr::var(x), "cap");
        let s = solve(&p, 1e-9, 100).unwrap();
        assert!((s.x[r] - 4.0).abs() < 1e-6);
    }
}
