//! Adapter exposing the `minilp` crate as a [`SolverBackend`], used to
//! cross-check the built-in simplex and as the `--backend external` choice.

use super::{LinearProgram, LpError, LpSolution, LpStatus, Relation, Sense, SolverBackend, FEAS_TOL};

/// Pure-Rust external simplex (the `minilp` crate). Deterministic; solves
/// continuous programs only, so binary marks are handled by branch and
/// bound above this layer exactly as for the built-in backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExternalSimplex;

impl SolverBackend for ExternalSimplex {
    fn name(&self) -> &str {
        "external"
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let direction = match lp.sense {
            Sense::Min => minilp::OptimizationDirection::Minimize,
            Sense::Max => minilp::OptimizationDirection::Maximize,
        };
        let mut problem = minilp::Problem::new(direction);
        let vars: Vec<minilp::Variable> = lp
            .objective
            .iter()
            .zip(&lp.bounds)
            .map(|(&c, b)| problem.add_var(c, (b.lower, b.upper)))
            .collect();
        for row in &lp.rows {
            let mut expr = minilp::LinearExpr::empty();
            let mut any = false;
            for (v, &c) in vars.iter().zip(&row.coeffs) {
                if c != 0.0 {
                    expr.add(*v, c);
                    any = true;
                }
            }
            if !any {
                // All-zero row: resolve its feasibility directly.
                let violated = match row.relation {
                    Relation::Le => row.rhs < -FEAS_TOL,
                    Relation::Ge => row.rhs > FEAS_TOL,
                    Relation::Eq => row.rhs.abs() > FEAS_TOL,
                };
                if violated {
                    return Ok(LpSolution::status_only(LpStatus::Infeasible));
                }
                continue;
            }
            let op = match row.relation {
                Relation::Le => minilp::ComparisonOp::Le,
                Relation::Ge => minilp::ComparisonOp::Ge,
                Relation::Eq => minilp::ComparisonOp::Eq,
            };
            problem.add_constraint(expr, op, row.rhs);
        }
        match problem.solve() {
            Ok(solution) => {
                let point: Vec<f64> = vars.iter().map(|v| solution[*v]).collect();
                let value = lp.objective_at(&point);
                Ok(LpSolution {
                    status: LpStatus::Optimal,
                    point: Some(point),
                    objective_value: Some(value),
                })
            }
            Err(minilp::Error::Infeasible) => Ok(LpSolution::status_only(LpStatus::Infeasible)),
            Err(minilp::Error::Unbounded) => Ok(LpSolution::status_only(LpStatus::Unbounded)),
        }
    }
}
