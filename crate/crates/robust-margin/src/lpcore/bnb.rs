//! Depth-first branch and bound over the binary marks of a
//! [`LinearProgram`].
//!
//! Relaxations are plain LP solves through the supplied backend; binaries
//! are fixed by collapsing their bounds, which the standardizer substitutes
//! out, so node relaxations shrink as the search deepens. Branching is
//! most-fractional with the one-branch explored first, and all choices are
//! deterministic.

use super::{solve_lp, LinearProgram, LpError, LpSolution, LpStatus, Sense, VarBounds};

/// Search limits for [`solve_binary_bnb_with`].
#[derive(Debug, Clone, Copy)]
pub struct BnbOptions {
    /// Abort with [`LpStatus::IterationLimit`] after this many node solves.
    pub node_limit: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { node_limit: 200_000 }
    }
}

const INT_TOL: f64 = 1e-6;

/// Exact optimum over the binary marks of `lp`, or a terminal status
/// (infeasible, unbounded relaxation, node limit).
pub fn solve_binary_bnb(
    backend: &dyn SolverBackend,
    lp: &LinearProgram,
) -> Result<LpSolution, LpError> {
    solve_binary_bnb_with(backend, lp, BnbOptions::default())
}

use super::SolverBackend;

pub fn solve_binary_bnb_with(
    backend: &dyn SolverBackend,
    lp: &LinearProgram,
    options: BnbOptions,
) -> Result<LpSolution, LpError> {
    let binaries: Vec<usize> =
        lp.integrality.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j).collect();
    if binaries.is_empty() {
        return solve_lp(backend, lp);
    }
    for &j in &binaries {
        let b = lp.bounds[j];
        if b.lower < -INT_TOL || b.upper > 1.0 + INT_TOL {
            return Err(LpError::Shape(format!(
                "binary variable {} has bounds [{}, {}] outside [0, 1]",
                j, b.lower, b.upper
            )));
        }
    }
    let maximize = lp.sense == Sense::Max;
    let as_max = |v: f64| if maximize { v } else { -v };

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut stack: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    let mut nodes = 0usize;

    while let Some(fixes) = stack.pop() {
        nodes += 1;
        if nodes > options.node_limit {
            return Ok(LpSolution::status_only(LpStatus::IterationLimit));
        }
        let mut node = lp.clone();
        node.integrality = vec![false; lp.num_vars()];
        for &(j, v) in &fixes {
            node.bounds[j] = VarBounds::fixed(v);
        }
        let relax = solve_lp(backend, &node)?;
        match relax.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Ok(LpSolution::status_only(LpStatus::Unbounded)),
            LpStatus::IterationLimit => {
                return Ok(LpSolution::status_only(LpStatus::IterationLimit))
            }
            LpStatus::Optimal => {}
        }
        let x = relax.point.expect("optimal relaxation carries a point");
        let bound = as_max(relax.objective_value.expect("optimal relaxation carries a value"));
        if let Some((best, _)) = &incumbent {
            if bound <= *best + 1e-9 * (1.0 + best.abs()) {
                continue;
            }
        }
        let fractional = binaries
            .iter()
            .map(|&j| (j, x[j].min(1.0 - x[j]).max(0.0)))
            .filter(|(_, frac)| *frac > INT_TOL)
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite fractionality"));
        match fractional {
            None => {
                // Integral relaxation: snap binaries and keep if improving.
                let mut snapped = x;
                for &j in &binaries {
                    snapped[j] = snapped[j].round();
                }
                let value = as_max(lp.objective_at(&snapped));
                if incumbent.as_ref().map_or(true, |(best, _)| value > *best) {
                    incumbent = Some((value, snapped));
                }
            }
            Some((j, _)) => {
                // Depth-first, exploring the one-branch first.
                let mut zero = fixes.clone();
                zero.push((j, 0.0));
                let mut one = fixes;
                one.push((j, 1.0));
                stack.push(zero);
                stack.push(one);
            }
        }
    }

    Ok(match incumbent {
        Some((value, point)) => LpSolution {
            status: LpStatus::Optimal,
            objective_value: Some(if maximize { value } else { -value }),
            point: Some(point),
        },
        None => LpSolution::status_only(LpStatus::Infeasible),
    })
}
