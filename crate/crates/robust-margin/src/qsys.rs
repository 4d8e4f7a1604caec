//! Quadratic system model: evaluation, Jacobian, damped Newton, the
//! Jacobian-sign precondition, and uncertainty boxes.
//!
//! The model is F(x) = Q(x) + Lx with [Q(x)]_i = x'Q_i x over states
//! constrained to a bounded polytope Ax <= b. Each Q_i is stored
//! symmetrized: x'Qx is unchanged and downstream builders (Jacobian rows,
//! lifted product coefficients) require one canonical representative.

use nalgebra::{DMatrix, DVector};

use crate::lpcore::{solve_lp, BuiltinSimplex, LinearProgram, LpStatus, Sense};

/// Newton residual tolerance in the infinity norm.
pub const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum QsysError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("polytope is unbounded along coordinate {coordinate}")]
    Unbounded { coordinate: usize },
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("bound probe failed: {0}")]
    BoundProbe(String),
}

/// The square system F(x) = Q(x) + Lx with forecast u* and error pattern e.
///
/// `e` marks which right-hand-side dimensions carry uncertainty: entries
/// greater than zero are active, zeros pin that dimension to the forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    n: usize,
    q_tensor: Vec<DMatrix<f64>>,
    l_matrix: DMatrix<f64>,
    u_star: DVector<f64>,
    e: DVector<f64>,
}

impl QuadraticSystem {
    /// Build a system, symmetrizing every quadratic coefficient matrix.
    /// Shape mismatches are hard errors; value-level invariants (like e >= 0)
    /// are reported by [`validate`] instead so callers can inspect them.
    pub fn new(
        q_tensor: Vec<DMatrix<f64>>,
        l_matrix: DMatrix<f64>,
        u_star: DVector<f64>,
        e: DVector<f64>,
    ) -> Result<Self, QsysError> {
        let n = u_star.len();
        if n == 0 {
            return Err(QsysError::Shape("system dimension must be positive".into()));
        }
        if q_tensor.len() != n {
            return Err(QsysError::Shape(format!(
                "{} quadratic matrices for dimension {}",
                q_tensor.len(),
                n
            )));
        }
        for (i, q) in q_tensor.iter().enumerate() {
            if q.nrows() != n || q.ncols() != n {
                return Err(QsysError::Shape(format!(
                    "quadratic matrix {} is {}x{}, expected {}x{}",
                    i,
                    q.nrows(),
                    q.ncols(),
                    n,
                    n
                )));
            }
        }
        if l_matrix.nrows() != n || l_matrix.ncols() != n {
            return Err(QsysError::Shape(format!(
                "linear matrix is {}x{}, expected {}x{}",
                l_matrix.nrows(),
                l_matrix.ncols(),
                n,
                n
            )));
        }
        if e.len() != n {
            return Err(QsysError::Shape(format!(
                "error pattern has {} entries, expected {}",
                e.len(),
                n
            )));
        }
        let q_tensor = q_tensor.into_iter().map(|q| (&q + q.transpose()) * 0.5).collect();
        Ok(QuadraticSystem { n, q_tensor, l_matrix, u_star, e })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Symmetrized quadratic coefficient matrix of output dimension `i`.
    pub fn q(&self, i: usize) -> &DMatrix<f64> {
        &self.q_tensor[i]
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l_matrix
    }

    pub fn u_star(&self) -> &DVector<f64> {
        &self.u_star
    }

    pub fn e(&self) -> &DVector<f64> {
        &self.e
    }

    pub fn active_dims(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.e[i] > 0.0)
    }
}

/// State limits Ax <= b.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a_matrix: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    pub fn new(a_matrix: DMatrix<f64>, b: DVector<f64>) -> Result<Self, QsysError> {
        if a_matrix.nrows() == 0 {
            return Err(QsysError::Shape("polytope needs at least one facet".into()));
        }
        if a_matrix.nrows() != b.len() {
            return Err(QsysError::Shape(format!(
                "{} facet rows but {} right-hand sides",
                a_matrix.nrows(),
                b.len()
            )));
        }
        Ok(Polytope { a_matrix, b })
    }

    pub fn m(&self) -> usize {
        self.a_matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.a_matrix.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a_matrix
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Facet slacks b - Ax; all nonnegative inside the polytope.
    pub fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a_matrix * x
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.slack(x).iter().all(|s| *s >= -tol)
    }

    /// Smallest facet slack; positive iff strictly interior.
    pub fn interior_margin(&self, x: &DVector<f64>) -> f64 {
        self.slack(x).iter().fold(f64::INFINITY, |m, s| m.min(*s))
    }

    /// Replace the right-hand side, keeping the facet normals. Used by the
    /// tightening procedure, which shrinks b between passes.
    pub fn with_b(&self, b: DVector<f64>) -> Result<Self, QsysError> {
        Polytope::new(self.a_matrix.clone(), b)
    }
}

/// Box of right-hand sides around the forecast at some radius.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBox {
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub active_mask: Vec<bool>,
}

/// Result of the Jacobian-sign precondition solve.
#[derive(Debug, Clone)]
pub struct DegreeCheck {
    pub solution: DVector<f64>,
    pub jacobian_det: f64,
    pub sign: i8,
    pub converged: bool,
}

impl DegreeCheck {
    /// The precondition behind every certification run: Newton converged
    /// and the Jacobian determinant has a definite sign. Uniqueness of the
    /// interior solution is not verified; reports carry that caveat.
    pub fn passes(&self) -> bool {
        self.converged && self.sign != 0
    }
}

/// F(x) = Q(x) + Lx.
pub fn eval_f(sys: &QuadraticSystem, x: &DVector<f64>) -> DVector<f64> {
    let mut out = &sys.l_matrix * x;
    for (i, q) in sys.q_tensor.iter().enumerate() {
        out[i] += (x.transpose() * q * x)[(0, 0)];
    }
    out
}

/// Jacobian of F at x: row i is 2 (Q_i x)' + L_i.
pub fn jacobian(sys: &QuadraticSystem, x: &DVector<f64>) -> DMatrix<f64> {
    let mut j = sys.l_matrix.clone();
    for (i, q) in sys.q_tensor.iter().enumerate() {
        let grad = q * x * 2.0;
        for k in 0..sys.n {
            j[(i, k)] += grad[k];
        }
    }
    j
}

/// Damped Newton iteration on F(x) - target_u from x0.
///
/// Steps halve until the residual decreases (up to 40 halvings); a singular
/// Jacobian or a stalled line search ends the iteration with
/// `converged = false` rather than an error.
pub fn newton_solve(
    sys: &QuadraticSystem,
    target_u: &DVector<f64>,
    x0: &DVector<f64>,
) -> DegreeCheck {
    let mut x = x0.clone();
    let mut residual = eval_f(sys, &x) - target_u;
    let mut res_norm = residual.amax();
    let mut converged = res_norm <= NEWTON_TOL;
    for _ in 0..NEWTON_MAX_ITER {
        if converged {
            break;
        }
        let j = jacobian(sys, &x);
        let Some(step) = j.lu().solve(&(-&residual)) else {
            break;
        };
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let candidate = &x + &step * alpha;
            let cand_residual = eval_f(sys, &candidate) - target_u;
            let cand_norm = cand_residual.amax();
            if cand_norm < res_norm {
                x = candidate;
                residual = cand_residual;
                res_norm = cand_norm;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
        converged = res_norm <= NEWTON_TOL;
    }
    let det = jacobian(sys, &x).determinant();
    let sign = if !det.is_finite() || det == 0.0 {
        0
    } else if det > 0.0 {
        1
    } else {
        -1
    };
    DegreeCheck { solution: x, jacobian_det: det, sign, converged }
}

/// The uncertainty box at radius `r`: active dimensions widen to
/// [u* - r, u* + r], inactive ones stay pinned at the forecast.
pub fn box_at_radius(sys: &QuadraticSystem, r: f64) -> Result<UncertaintyBox, QsysError> {
    if r < 0.0 || !r.is_finite() {
        return Err(QsysError::NegativeRadius(r));
    }
    let n = sys.n;
    let mut u_min = sys.u_star.clone();
    let mut u_max = sys.u_star.clone();
    let mut active_mask = vec![false; n];
    for i in 0..n {
        if sys.e[i] > 0.0 {
            active_mask[i] = true;
            u_min[i] -= r;
            u_max[i] += r;
        }
    }
    Ok(UncertaintyBox { u_min, u_max, active_mask })
}

/// Per-coordinate extreme values of x over the polytope, via 2n LP solves.
pub fn coordinate_bounds(poly: &Polytope) -> Result<Vec<(f64, f64)>, QsysError> {
    let backend = BuiltinSimplex;
    let n = poly.n();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut extremes = [0.0f64; 2];
        for (slot, sense) in [(0usize, Sense::Min), (1usize, Sense::Max)] {
            let mut obj = vec![0.0; n];
            obj[j] = 1.0;
            let mut lp = LinearProgram::new(sense, obj);
            for i in 0..poly.m() {
                let coeffs: Vec<f64> = (0..n).map(|k| poly.a()[(i, k)]).collect();
                lp.push_row(coeffs, crate::lpcore::Relation::Le, poly.b()[i]);
            }
            let sol = solve_lp(&backend, &lp).map_err(|e| QsysError::BoundProbe(e.to_string()))?;
            match sol.status {
                LpStatus::Optimal => {
                    extremes[slot] = sol.objective_value.expect("optimal solve carries value")
                }
                LpStatus::Unbounded => return Err(QsysError::Unbounded { coordinate: j }),
                LpStatus::Infeasible => return Err(QsysError::EmptyPolytope),
                LpStatus::IterationLimit => {
                    return Err(QsysError::BoundProbe(format!(
                        "iteration limit while bounding coordinate {j}"
                    )))
                }
            }
        }
        out.push((extremes[0], extremes[1]));
    }
    Ok(out)
}

/// Check every value-level invariant of a system/polytope pair, returning
/// one human-readable violation per broken invariant (empty means valid).
pub fn validate(sys: &QuadraticSystem, poly: &Polytope) -> Vec<String> {
    let mut violations = Vec::new();
    if poly.n() != sys.n {
        violations.push(format!(
            "polytope is over {} states but the system has dimension {}",
            poly.n(),
            sys.n
        ));
    }
    if sys.e.iter().any(|v| *v < 0.0) {
        violations.push("e must be nonnegative".to_string());
    }
    for i in 0..poly.m() {
        if (0..poly.n()).all(|j| poly.a()[(i, j)] == 0.0) {
            violations.push(format!("facet {i} of A is all zeros"));
        }
    }
    if poly.n() == sys.n {
        match coordinate_bounds(poly) {
            Ok(_) => {}
            Err(QsysError::Unbounded { coordinate }) => {
                violations.push(format!("polytope unbounded (coordinate {coordinate})"));
            }
            Err(QsysError::EmptyPolytope) => violations.push("polytope empty".to_string()),
            Err(e) => violations.push(format!("boundedness probe failed: {e}")),
        }
    }
    violations
}

/// Small two-dimensional worked instance used across tests, docs, and
/// examples: states boxed to [0.5, 3]^2, both uncertainty dims active.
pub mod sample {
    use super::*;

    pub fn quadratic_2d() -> (QuadraticSystem, Polytope) {
        let q1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let q2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 2.0, -1.0]);
        let u_star = DVector::from_row_slice(&[-2.0, 4.0]);
        let e = DVector::from_row_slice(&[1.0, 1.0]);
        let sys = QuadraticSystem::new(vec![q1, q2], l, u_star, e).expect("static data");
        let a = DMatrix::from_row_slice(
            4,
            2,
            &[-1.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0],
        );
        let b = DVector::from_row_slice(&[-0.5, 3.0, -0.5, 3.0]);
        let poly = Polytope::new(a, b).expect("static data");
        (sys, poly)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_relative_eq, relative_eq};

    #[test]
    fn sample_instance_validates_clean() {
        let (sys, poly) = sample::quadratic_2d();
        assert!(validate(&sys, &poly).is_empty());
    }

    #[test]
    fn eval_matches_hand_expansion() {
        let (sys, _) = sample::quadratic_2d();
        let f = eval_f(&sys, &DVector::from_row_slice(&[0.5, 0.5]));
        assert_relative_eq!(f[0], -0.75, epsilon = 1e-14);
        assert_relative_eq!(f[1], 0.75, epsilon = 1e-14);
    }

    #[test]
    fn jacobian_at_ones() {
        let (sys, _) = sample::quadratic_2d();
        let j = jacobian(&sys, &DVector::from_row_slice(&[1.0, 1.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[3.0, -3.0, 2.0, 1.0]);
        assert!(relative_eq!(j, expected, epsilon = 1e-14));
    }

    #[test]
    fn symmetrization_preserves_quadratic_form() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 4.0, 0.0, 2.0]);
        let l = DMatrix::zeros(2, 2);
        let sys = QuadraticSystem::new(
            vec![q, DMatrix::zeros(2, 2)],
            l,
            DVector::zeros(2),
            DVector::from_row_slice(&[1.0, 1.0]),
        )
        .unwrap();
        assert_relative_eq!(sys.q(0)[(0, 1)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(sys.q(0)[(1, 0)], 2.0, epsilon = 1e-15);
        let x = DVector::from_row_slice(&[1.5, -2.0]);
        // x'Qx with the raw asymmetric Q: 1.5^2 + 4*1.5*(-2) + 2*4 = -1.75.
        assert_relative_eq!(eval_f(&sys, &x)[0], -1.75, epsilon = 1e-12);
    }

    #[test]
    fn newton_converges_to_known_root() {
        let (sys, _) = sample::quadratic_2d();
        let check = newton_solve(&sys, sys.u_star(), &DVector::from_row_slice(&[1.0, 1.0]));
        assert!(check.converged);
        assert_eq!(check.sign, 1);
        assert_relative_eq!(check.solution[0], 1.36019446, epsilon = 1e-6);
        assert_relative_eq!(check.solution[1], 1.73677447, epsilon = 1e-6);
        assert_relative_eq!(check.jacobian_det, 15.2026, epsilon = 1e-3);
        let residual = (eval_f(&sys, &check.solution) - sys.u_star()).amax();
        assert!(residual <= NEWTON_TOL);
    }

    #[test]
    fn newton_is_exact_on_linear_systems() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let sys = QuadraticSystem::new(
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
            l,
            DVector::zeros(2),
            DVector::from_row_slice(&[1.0, 1.0]),
        )
        .unwrap();
        let target = DVector::from_row_slice(&[5.0, 9.0]);
        let check = newton_solve(&sys, &target, &DVector::from_row_slice(&[100.0, -40.0]));
        assert!(check.converged);
        assert_relative_eq!(check.solution[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(check.solution[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn newton_reports_nonconvergence_on_singular_jacobian() {
        // F(x) = x1^2 has a singular Jacobian everywhere on x1 = 0 and no
        // real solution for target -1; must flag, not crash.
        let q1 = DMatrix::from_row_slice(1, 1, &[1.0]);
        let sys = QuadraticSystem::new(
            vec![q1],
            DMatrix::zeros(1, 1),
            DVector::from_row_slice(&[-1.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        let check = newton_solve(&sys, &DVector::from_row_slice(&[-1.0]), &DVector::zeros(1));
        assert!(!check.converged);
    }

    #[test]
    fn box_examples() {
        let (sys, _) = sample::quadratic_2d();
        let unit = box_at_radius(&sys, 1.0).unwrap();
        assert_eq!(unit.u_min.as_slice(), &[-3.0, 3.0]);
        assert_eq!(unit.u_max.as_slice(), &[-1.0, 5.0]);
        let degenerate = box_at_radius(&sys, 0.0).unwrap();
        assert_eq!(degenerate.u_min, degenerate.u_max);
        assert!(box_at_radius(&sys, -0.5).is_err());
    }

    #[test]
    fn box_respects_inactive_dims() {
        let (sys, _) = sample::quadratic_2d();
        let masked = QuadraticSystem::new(
            (0..2).map(|i| sys.q(i).clone()).collect(),
            sys.l().clone(),
            sys.u_star().clone(),
            DVector::from_row_slice(&[1.0, 0.0]),
        )
        .unwrap();
        let bx = box_at_radius(&masked, 0.25).unwrap();
        assert_eq!(bx.active_mask, vec![true, false]);
        assert_eq!(bx.u_min[1], bx.u_max[1]);
        assert_relative_eq!(bx.u_max[0] - bx.u_min[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn validate_flags_unbounded_and_negative_e() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let half_plane = Polytope::new(a, DVector::from_row_slice(&[1.0])).unwrap();
        let (sys, _) = sample::quadratic_2d();
        let violations = validate(&sys, &half_plane);
        assert!(violations.iter().any(|v| v.contains("unbounded")));

        let bad_e = QuadraticSystem::new(
            (0..2).map(|i| sys.q(i).clone()).collect(),
            sys.l().clone(),
            sys.u_star().clone(),
            DVector::from_row_slice(&[1.0, -1.0]),
        )
        .unwrap();
        let (_, poly) = sample::quadratic_2d();
        let violations = validate(&bad_e, &poly);
        assert!(violations.iter().any(|v| v == "e must be nonnegative"));
    }

    #[test]
    fn coordinate_bounds_of_sample_box() {
        let (_, poly) = sample::quadratic_2d();
        let bounds = coordinate_bounds(&poly).unwrap();
        assert_eq!(bounds.len(), 2);
        for (lo, hi) in bounds {
            assert_relative_eq!(lo, 0.5, epsilon = 1e-9);
            assert_relative_eq!(hi, 3.0, epsilon = 1e-9);
        }
    }
}
