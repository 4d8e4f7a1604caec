//! Outer bound on the robustness margin: the smallest one-sided extent of
//! the relaxed image of the state polytope around the forecast, computed
//! through the dual of the inner maximization so each direction is one
//! small LP.
//!
//! For a direction lambda on the l1 sphere, the inner problem maximizes
//! lambda' (F(x) - u*) over the lifted relaxation of the state polytope
//! (state rows and product rows only; no uncertainty rows). Its dual is
//! min B'y subject to M'y = g(lambda), y >= 0. Minimizing over directions
//! upper-bounds the margin restricted to the active uncertainty dimensions.
//! Two modes: vertex enumeration over lambda = +-e_i (always sound), and a
//! sign-complementarity mixed-integer formulation that searches the whole
//! sphere.

use serde::{Deserialize, Serialize};

use crate::lift::{lift_dim, quadratic_row, LiftedIndex};
use crate::lpcore::{
    solve_binary_bnb, solve_lp, LinearProgram, LpError, LpStatus, Relation, Sense, SolverBackend,
    VarBounds,
};
use crate::qsys::{Polytope, QsysError, QuadraticSystem};

#[derive(Debug, thiserror::Error)]
pub enum UpperError {
    #[error(transparent)]
    Qsys(#[from] QsysError),
    #[error(transparent)]
    Lift(#[from] crate::lift::LiftError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("lambda must have l1 norm 1 (got {0}) and dimension n")]
    BadLambda(f64),
    #[error("inner relaxation is infeasible (state polytope empty): dual unbounded below")]
    InnerEmpty,
    #[error("no finite upper bound: the relaxation is unbounded in every probed direction")]
    AllDirectionsUnbounded,
    #[error("no active uncertainty dimensions: the outer bound is undefined")]
    NoActiveDims,
    #[error("outer optimization ended with status {0}")]
    SolveFailed(crate::lpcore::LpStatus),
}

/// The dualized inner maximization: constraint matrix M, right-hand side B,
/// and the data needed to build the objective g(lambda).
///
/// Columns of M are [x_1..x_n, dummy (iff u* != 0), X upper triangle]; rows
/// are the m state limits, the two dummy-pinning rows (iff the dummy
/// exists), then the m^2 product rows, all as <=.
#[derive(Debug, Clone)]
pub struct DualSystem {
    m_matrix: Vec<Vec<f64>>,
    b_vector: Vec<f64>,
    uses_dummy: bool,
    n: usize,
    /// Lifted coefficient row of each output (x part, then X part).
    g_rows: Vec<Vec<f64>>,
    u_star: Vec<f64>,
}

impl DualSystem {
    pub fn rows(&self) -> usize {
        self.m_matrix.len()
    }

    pub fn cols(&self) -> usize {
        lift_dim(self.n) + usize::from(self.uses_dummy)
    }

    pub fn uses_dummy(&self) -> bool {
        self.uses_dummy
    }

    pub fn m_matrix(&self) -> &[Vec<f64>] {
        &self.m_matrix
    }

    pub fn b_vector(&self) -> &[f64] {
        &self.b_vector
    }

    /// Objective coefficients of the inner max for direction `lambda`,
    /// laid out over the columns of M. Linear in lambda by construction.
    pub fn g(&self, lambda: &[f64]) -> Vec<f64> {
        let n = self.n;
        let dim = lift_dim(n);
        let mut stacked = vec![0.0; dim];
        for (i, &li) in lambda.iter().enumerate() {
            if li != 0.0 {
                for (slot, coeff) in stacked.iter_mut().zip(&self.g_rows[i]) {
                    *slot += li * coeff;
                }
            }
        }
        if !self.uses_dummy {
            return stacked;
        }
        let dummy: f64 = lambda.iter().zip(&self.u_star).map(|(l, u)| -l * u).sum();
        let mut out = Vec::with_capacity(dim + 1);
        out.extend_from_slice(&stacked[..n]);
        out.push(dummy);
        out.extend_from_slice(&stacked[n..]);
        out
    }
}

/// Assemble M, B, and the g data from the state polytope and system.
pub fn build_inner_max(sys: &QuadraticSystem, poly: &Polytope) -> Result<DualSystem, UpperError> {
    let n = sys.n();
    if poly.n() != n {
        return Err(UpperError::Qsys(QsysError::Shape(format!(
            "polytope over {} states, system dimension {}",
            poly.n(),
            n
        ))));
    }
    let m = poly.m();
    let idx = LiftedIndex::new(n);
    let uses_dummy = sys.u_star().iter().any(|u| *u != 0.0);
    let dummy_col = n; // only meaningful when uses_dummy
    let ncols = lift_dim(n) + usize::from(uses_dummy);
    let xcol = |j: usize| j;
    let pcol = |q: usize, r: usize| idx.col(q, r) + usize::from(uses_dummy);

    let mut m_matrix = Vec::with_capacity(m + m * m + 2);
    let mut b_vector = Vec::with_capacity(m + m * m + 2);
    let a = poly.a();
    let b = poly.b();
    for i in 0..m {
        let mut row = vec![0.0; ncols];
        for j in 0..n {
            row[xcol(j)] = a[(i, j)];
        }
        m_matrix.push(row);
        b_vector.push(b[i]);
    }
    if uses_dummy {
        let mut up = vec![0.0; ncols];
        up[dummy_col] = 1.0;
        m_matrix.push(up);
        b_vector.push(1.0);
        let mut down = vec![0.0; ncols];
        down[dummy_col] = -1.0;
        m_matrix.push(down);
        b_vector.push(-1.0);
    }
    // Product rows, negated into <= form.
    for q in 0..m {
        for r in 0..m {
            let mut row = vec![0.0; ncols];
            for j in 0..n {
                row[xcol(j)] = b[r] * a[(q, j)] + b[q] * a[(r, j)];
            }
            for j in 0..n {
                let aq = a[(q, j)];
                if aq == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let prod = aq * a[(r, k)];
                    if prod != 0.0 {
                        row[pcol(j, k)] -= prod;
                    }
                }
            }
            m_matrix.push(row);
            b_vector.push(b[q] * b[r]);
        }
    }

    let g_rows = (0..n).map(|i| quadratic_row(sys, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(DualSystem {
        m_matrix,
        b_vector,
        uses_dummy,
        n,
        g_rows,
        u_star: sys.u_star().iter().copied().collect(),
    })
}

/// The dual LP for one direction: min B'y s.t. M'y = g(lambda), y >= 0.
/// Requires lambda on the l1 unit sphere.
pub fn dualize(dual_sys: &DualSystem, lambda: &[f64]) -> Result<LinearProgram, UpperError> {
    let norm: f64 = lambda.iter().map(|v| v.abs()).sum();
    if (norm - 1.0).abs() > 1e-9 || lambda.len() != dual_sys.n {
        return Err(UpperError::BadLambda(norm));
    }
    Ok(dualize_unchecked(dual_sys, lambda))
}

/// As [`dualize`] without the sphere check; the inner value is positively
/// homogeneous in lambda, which tests assert through this entry point.
pub fn dualize_unchecked(dual_sys: &DualSystem, lambda: &[f64]) -> LinearProgram {
    let rows = dual_sys.rows();
    let cols = dual_sys.cols();
    let g = dual_sys.g(lambda);
    let mut lp = LinearProgram::new(Sense::Min, dual_sys.b_vector.clone());
    lp.bounds = vec![VarBounds::non_negative(); rows];
    lp.names = (1..=rows).map(|k| format!("y{k}")).collect();
    for c in 0..cols {
        let coeffs: Vec<f64> = (0..rows).map(|k| dual_sys.m_matrix[k][c]).collect();
        lp.push_row(coeffs, Relation::Eq, g[c]);
    }
    lp
}

/// Value of the inner max in direction lambda via the dual; `None` means
/// the relaxation is unbounded in this direction (dual infeasible).
pub fn direction_value(
    backend: &dyn SolverBackend,
    dual_sys: &DualSystem,
    lambda: &[f64],
) -> Result<Option<f64>, UpperError> {
    let lp = dualize(dual_sys, lambda)?;
    let sol = solve_lp(backend, &lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(sol.objective_value.expect("optimal solve carries value"))),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(UpperError::InnerEmpty),
        LpStatus::IterationLimit => Err(UpperError::SolveFailed(LpStatus::IterationLimit)),
    }
}

/// How the direction sphere is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterMode {
    /// Probe lambda = +-e_i for each active dimension; sound and cheap.
    VertexEnumeration,
    /// Mixed-integer search over the whole l1 sphere via a sign split of
    /// lambda with binary complementarity; tighter, costlier.
    SignComplementarity,
}

impl std::fmt::Display for OuterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OuterMode::VertexEnumeration => write!(f, "vertex"),
            OuterMode::SignComplementarity => write!(f, "mip"),
        }
    }
}

/// One probed direction and its inner value; `None` marks an unbounded
/// direction (relaxation extends forever that way).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionValue {
    pub lambda: Vec<f64>,
    pub value: Option<f64>,
}

/// Outer-bound result: the raw minimum over probed directions, its
/// minimizer, and every probe for the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterSolution {
    pub z_upper: f64,
    pub lambda_argmin: Vec<f64>,
    pub directions: Vec<DirectionValue>,
    pub mode: OuterMode,
}

/// Minimize the inner max over directions on the l1 sphere restricted to
/// the active uncertainty dimensions.
pub fn solve_outer(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    mode: OuterMode,
) -> Result<OuterSolution, UpperError> {
    let active: Vec<usize> = sys.active_dims().collect();
    if active.is_empty() {
        return Err(UpperError::NoActiveDims);
    }
    let dual_sys = build_inner_max(sys, poly)?;
    match mode {
        OuterMode::VertexEnumeration => {
            let mut directions = Vec::with_capacity(2 * active.len());
            let mut best: Option<(f64, Vec<f64>)> = None;
            for &i in &active {
                for sign in [1.0, -1.0] {
                    let mut lambda = vec![0.0; sys.n()];
                    lambda[i] = sign;
                    let value = direction_value(backend, &dual_sys, &lambda)?;
                    if let Some(v) = value {
                        if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                            best = Some((v, lambda.clone()));
                        }
                    }
                    directions.push(DirectionValue { lambda, value });
                }
            }
            let (z_upper, lambda_argmin) = best.ok_or(UpperError::AllDirectionsUnbounded)?;
            Ok(OuterSolution { z_upper, lambda_argmin, directions, mode })
        }
        OuterMode::SignComplementarity => {
            let sol = solve_sign_complementarity(backend, sys, &dual_sys, &active)?;
            Ok(OuterSolution { mode, ..sol })
        }
    }
}

/// Joint minimization over (y, lambda+, lambda-) with binary switches
/// keeping the two signs complementary, so the l1 norm constraint
/// sum(lambda+ + lambda-) = 1 is exact.
fn solve_sign_complementarity(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    dual_sys: &DualSystem,
    active: &[usize],
) -> Result<OuterSolution, UpperError> {
    let rows = dual_sys.rows();
    let cols = dual_sys.cols();
    let na = active.len();
    // Variables: y (rows), lambda+ (na), lambda- (na), s (na, binary).
    let total = rows + 3 * na;
    let y0 = 0;
    let lp0 = rows;
    let lm0 = rows + na;
    let s0 = rows + 2 * na;

    let mut objective = vec![0.0; total];
    objective[y0..rows].copy_from_slice(&dual_sys.b_vector);
    let mut lp = LinearProgram::new(Sense::Min, objective);
    lp.bounds = vec![VarBounds::non_negative(); total];
    for k in 0..na {
        lp.bounds[lp0 + k] = VarBounds::range(0.0, 1.0);
        lp.bounds[lm0 + k] = VarBounds::range(0.0, 1.0);
        lp.bounds[s0 + k] = VarBounds::range(0.0, 1.0);
        lp.integrality[s0 + k] = true;
    }
    let mut names: Vec<String> = (1..=rows).map(|k| format!("y{k}")).collect();
    names.extend(active.iter().map(|i| format!("lam_p{}", i + 1)));
    names.extend(active.iter().map(|i| format!("lam_m{}", i + 1)));
    names.extend(active.iter().map(|i| format!("s{}", i + 1)));
    lp.names = names;

    // M'y = g(lambda+ - lambda-), using linearity of g per dimension.
    let unit_g: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            let mut lambda = vec![0.0; sys.n()];
            lambda[i] = 1.0;
            dual_sys.g(&lambda)
        })
        .collect();
    for c in 0..cols {
        let mut coeffs = vec![0.0; total];
        for k in 0..rows {
            coeffs[y0 + k] = dual_sys.m_matrix[k][c];
        }
        for k in 0..na {
            coeffs[lp0 + k] = -unit_g[k][c];
            coeffs[lm0 + k] = unit_g[k][c];
        }
        lp.push_row(coeffs, Relation::Eq, 0.0);
    }
    // l1 normalization over the active dimensions.
    let mut norm_row = vec![0.0; total];
    for k in 0..na {
        norm_row[lp0 + k] = 1.0;
        norm_row[lm0 + k] = 1.0;
    }
    lp.push_row(norm_row, Relation::Eq, 1.0);
    // Complementarity: lambda+ <= s, lambda- <= 1 - s.
    for k in 0..na {
        let mut up = vec![0.0; total];
        up[lp0 + k] = 1.0;
        up[s0 + k] = -1.0;
        lp.push_row(up, Relation::Le, 0.0);
        let mut down = vec![0.0; total];
        down[lm0 + k] = 1.0;
        down[s0 + k] = 1.0;
        lp.push_row(down, Relation::Le, 1.0);
    }

    let sol = solve_binary_bnb(backend, &lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(UpperError::AllDirectionsUnbounded),
        LpStatus::Unbounded => return Err(UpperError::InnerEmpty),
        LpStatus::IterationLimit => {
            return Err(UpperError::SolveFailed(LpStatus::IterationLimit))
        }
    }
    let point = sol.point.expect("optimal solve carries point");
    let z_upper = sol.objective_value.expect("optimal solve carries value");
    let mut lambda = vec![0.0; sys.n()];
    for (k, &i) in active.iter().enumerate() {
        lambda[i] = point[lp0 + k] - point[lm0 + k];
    }
    let direction = DirectionValue { lambda: lambda.clone(), value: Some(z_upper) };
    Ok(OuterSolution {
        z_upper,
        lambda_argmin: lambda,
        directions: vec![direction],
        mode: OuterMode::SignComplementarity,
    })
}

/// Upper bound on the robustness margin restricted to the active
/// dimensions. The raw direction minimum can be negative when even the
/// forecast itself is outside the relaxed image; the margin is a radius,
/// so the bound is clamped at zero (the raw value stays visible in
/// [`OuterSolution::z_upper`]).
pub fn margin_upper(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    mode: OuterMode,
) -> Result<f64, UpperError> {
    Ok(solve_outer(backend, sys, poly, mode)?.z_upper.max(0.0))
}
