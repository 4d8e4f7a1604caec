//! Backend-neutral linear program types, the built-in simplex, and branch
//! and bound for binary variables.
//!
//! Everything downstream (certificates, outer bounds, the oracle cross
//! checks) reduces to [`LinearProgram`] values solved through the
//! [`SolverBackend`] trait, so solutions can be reproduced against an
//! external solver or dumped to `.lp` files without touching callers.
//!
//! Matrices are dense throughout: the instances this crate builds are small
//! (thousands of rows), RLT rows are near-dense in the lifted variables, and
//! dense storage keeps the simplex kernel simple and deterministic.

mod bnb;
mod export;
mod external;
mod simplex;

pub use bnb::{solve_binary_bnb, BnbOptions};
pub use export::{write_lp_file, ExportingBackend};
pub use external::ExternalSimplex;
pub use simplex::BuiltinSimplex;

use std::fmt;

/// Feasibility tolerance: a point is accepted when no row or bound is
/// violated by more than this.
pub const FEAS_TOL: f64 = 1e-7;

/// Relative reduced-cost tolerance for declaring optimality.
pub const OPT_TOL: f64 = 1e-9;

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// Row relation in a constraint `coeffs . x (rel) rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => write!(f, "<="),
            Relation::Eq => write!(f, "="),
            Relation::Ge => write!(f, ">="),
        }
    }
}

/// One dense constraint row.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Row { coeffs, relation, rhs }
    }

    /// Signed violation of this row at `x` (positive means violated).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => lhs - self.rhs,
            Relation::Ge => self.rhs - lhs,
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Per-variable bounds; infinities mark free directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarBounds {
    pub lower: f64,
    pub upper: f64,
}

impl VarBounds {
    pub fn free() -> Self {
        VarBounds { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn non_negative() -> Self {
        VarBounds { lower: 0.0, upper: f64::INFINITY }
    }

    pub fn fixed(v: f64) -> Self {
        VarBounds { lower: v, upper: v }
    }

    pub fn range(lower: f64, upper: f64) -> Self {
        VarBounds { lower, upper }
    }
}

/// A dense linear program, optionally with binary variables.
///
/// `integrality[j]` marks variable `j` as binary; plain LP solves ignore the
/// marks (they are handled by [`solve_binary_bnb`]).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub bounds: Vec<VarBounds>,
    pub integrality: Vec<bool>,
    /// Column names used by the `.lp` exporter; defaults to `x1`, `x2`, ...
    pub names: Vec<String>,
}

impl LinearProgram {
    /// A program over `n` free continuous variables with no rows.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows: Vec::new(),
            bounds: vec![VarBounds::free(); n],
            integrality: vec![false; n],
            names: (1..=n).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(Row::new(coeffs, relation, rhs));
    }

    /// Objective value at `x` in the program's own sense.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn check_shape(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n || self.integrality.len() != n {
            return Err(LpError::Shape(format!(
                "bounds/integrality length ({}/{}) does not match {} variables",
                self.bounds.len(),
                self.integrality.len(),
                n
            )));
        }
        if let Some((i, row)) = self.rows.iter().enumerate().find(|(_, r)| r.coeffs.len() != n) {
            return Err(LpError::Shape(format!(
                "row {} has {} coefficients, expected {}",
                i,
                row.coeffs.len(),
                n
            )));
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lower > b.upper {
                return Err(LpError::Shape(format!(
                    "variable {} has empty bound interval [{}, {}]",
                    j, b.lower, b.upper
                )));
            }
        }
        Ok(())
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpStatus::Optimal => write!(f, "optimal"),
            LpStatus::Infeasible => write!(f, "infeasible"),
            LpStatus::Unbounded => write!(f, "unbounded"),
            LpStatus::IterationLimit => write!(f, "iteration-limit"),
        }
    }
}

/// Result of a solve; `point` and `objective_value` are present exactly when
/// the status is [`LpStatus::Optimal`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub point: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
}

impl LpSolution {
    pub fn status_only(status: LpStatus) -> Self {
        LpSolution { status, point: None, objective_value: None }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// The optimal point, or an error naming the actual status.
    pub fn require_point(&self) -> Result<&[f64], LpError> {
        self.point.as_deref().ok_or(LpError::NotOptimal(self.status))
    }
}

/// Errors surfaced by LP construction and backends.
#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Shape(String),
    #[error("solve did not produce a point (status {0})")]
    NotOptimal(LpStatus),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("could not write LP file: {0}")]
    Io(#[from] std::io::Error),
}

/// A deterministic LP solver. Implementations must return bit-identical
/// results for identical inputs; randomized or multithreaded pivoting is out
/// of contract.
pub trait SolverBackend {
    /// Human-readable backend name recorded in reports.
    fn name(&self) -> &str;

    /// Solve the continuous relaxation (integrality marks ignored).
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

impl SolverBackend for Box<dyn SolverBackend + '_> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        (**self).solve(lp)
    }
}

/// Solve with the given backend after shape validation, verifying any
/// claimed optimum against the program before returning it.
///
/// A claimed optimal point violating a row or bound by more than
/// [`FEAS_TOL`] (scaled by the row magnitude) is a backend bug and is
/// reported as such rather than propagated into certificates.
pub fn solve_lp(backend: &dyn SolverBackend, lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check_shape()?;
    let sol = backend.solve(lp)?;
    if let LpSolution { status: LpStatus::Optimal, point: Some(x), .. } = &sol {
        let worst = check_solution(lp, x);
        if worst > FEAS_TOL {
            return Err(LpError::Backend(format!(
                "backend {} returned an optimum violating constraints by {:.3e}",
                backend.name(),
                worst
            )));
        }
    }
    Ok(sol)
}

/// Largest relative constraint violation of `x` against `lp`: rows, variable
/// bounds, and integrality marks. Zero means exactly feasible.
///
/// Row violations are scaled by `1 + |rhs| + |coeffs|_inf` so the measure is
/// meaningful across badly scaled rows.
pub fn check_solution(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    if x.len() != lp.num_vars() {
        return f64::INFINITY;
    }
    for row in &lp.rows {
        let scale = 1.0 + row.rhs.abs() + row.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        worst = worst.max(row.violation(x) / scale);
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        let scale = 1.0 + b.lower.abs().min(b.upper.abs());
        if b.lower.is_finite() {
            worst = worst.max((b.lower - x[j]) / scale);
        }
        if b.upper.is_finite() {
            worst = worst.max((x[j] - b.upper) / scale);
        }
    }
    for (j, &is_bin) in lp.integrality.iter().enumerate() {
        if is_bin {
            worst = worst.max((x[j] - x[j].round()).abs());
        }
    }
    worst
}
