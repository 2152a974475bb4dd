//! Thin wrapper over `microlp` for the small dense LPs used by polytope
//! utilities (Chebyshev centers, redundancy pruning, boundedness checks).

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
}

/// Maximize `c^T x` over free `x` subject to `rows[i] . x <= rhs[i]` and the
/// optional per-variable bounds.
pub(crate) fn maximize(
    c: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
    bounds: &[(f64, f64)],
) -> Result<LpSolution> {
    let n = c.len();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let b = bounds.get(j).copied().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            problem.add_var(c[j], b)
        })
        .collect();
    for (row, &r) in rows.iter().zip(rhs) {
        let expr: Vec<_> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, &v)| (vars[j], v))
            .collect();
        problem.add_constraint(expr.as_slice(), ComparisonOp::Le, r);
    }
    match problem.solve() {
        Ok(outcome) => {
            let sol = outcome
                .into_solution()
                .map_err(|e| Error::Lp(format!("interrupted: {e:?}")))?;
            let x = vars.iter().map(|&v| sol.var_value(v)).collect();
            Ok(LpSolution { status: LpStatus::Optimal, x })
        }
        Err(microlp::Error::Infeasible) => {
            Ok(LpSolution { status: LpStatus::Infeasible, x: vec![] })
        }
        Err(microlp::Error::Unbounded) => {
            Ok(LpSolution { status: LpStatus::Unbounded, x: vec![] })
        }
        Err(e) => Err(Error::Lp(e.to_string())),
    }
}
