//! Lifted linearization shared by every relaxed procedure: the variable
//! stack [x, upper-tri(X)], quadratic trace rows, and the componentwise
//! product (RLT) constraint block.
//!
//! X stands in for xx' but only its upper triangle exists as variables, so
//! symmetry is structural. No positive-semidefiniteness is imposed anywhere;
//! that is the known source of relaxation gap. The product block contains
//! one row for every ordered facet pair (all m^2 of them, not just the
//! distinct m(m+1)/2): problem-size bookkeeping downstream is only
//! consistent with the full square block.

use nalgebra::DVector;

use crate::lpcore::{LinearProgram, Relation, Row, Sense, VarBounds};
use crate::qsys::{Polytope, QuadraticSystem, UncertaintyBox};

#[derive(Debug, thiserror::Error)]
pub enum LiftError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("output index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
}

/// Total number of lifted variables for base dimension `n`.
pub fn lift_dim(n: usize) -> usize {
    n + n * (n + 1) / 2
}

/// Column layout of the lifted vector [x_1..x_n, X_11, X_12, .., X_nn].
///
/// Product columns are in row-major upper-triangular order; `col` accepts
/// its pair in either order since X is symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftedIndex {
    n: usize,
}

impl LiftedIndex {
    pub fn new(n: usize) -> Self {
        LiftedIndex { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        lift_dim(self.n)
    }

    /// Column of the product variable X_qr (0-based states, any order).
    pub fn col(&self, q: usize, r: usize) -> usize {
        let (q, r) = if q <= r { (q, r) } else { (r, q) };
        debug_assert!(r < self.n);
        // Row q of the upper triangle starts after q*n - q(q-1)/2 entries.
        self.n + q * (2 * self.n - q + 1) / 2 + (r - q)
    }

    /// Column of state variable x_j.
    pub fn state_col(&self, j: usize) -> usize {
        debug_assert!(j < self.n);
        j
    }

    /// The lifted image of a concrete state: [x, upper-tri(xx')].
    pub fn lift_point(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        out[..self.n].copy_from_slice(x.as_slice());
        for q in 0..self.n {
            for r in q..self.n {
                out[self.col(q, r)] = x[q] * x[r];
            }
        }
        out
    }

    /// Human-readable column names (`x1..`, then `X1_1..`), used by the
    /// LP exporter; order matches the column layout.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n).map(|j| format!("x{j}")).collect();
        for q in 0..self.n {
            for r in q..self.n {
                names.push(format!("X{}_{}", q + 1, r + 1));
            }
        }
        names
    }
}

/// Origin of a constraint row within an assembled block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    StateLimit,
    Rlt,
    ULower,
    UUpper,
    Facet,
    Dummy,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            Provenance::StateLimit => "state-limit",
            Provenance::Rlt => "rlt",
            Provenance::ULower => "u-lower",
            Provenance::UUpper => "u-upper",
            Provenance::Facet => "facet",
            Provenance::Dummy => "dummy",
        };
        write!(f, "{tag}")
    }
}

/// One row over the lifted variables with its origin tag.
#[derive(Debug, Clone)]
pub struct LiftedRow {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
    pub provenance: Provenance,
}

/// A bundle of lifted rows plus size bookkeeping.
///
/// Degenerate uncertainty dimensions may merge their two bound rows into
/// one equality; `merged_rows` records how many did, so
/// `bookkeeping_len` always reports the canonical 2n + m + m^2 count that
/// problem-size tables use.
#[derive(Debug, Clone, Default)]
pub struct ConstraintBlock {
    pub rows: Vec<LiftedRow>,
    merged_rows: usize,
}

impl ConstraintBlock {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row count with merged equality rows counted as the pair they stand for.
    pub fn bookkeeping_len(&self) -> usize {
        self.rows.len() + self.merged_rows
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64, prov: Provenance) {
        self.rows.push(LiftedRow { coeffs, relation, rhs, provenance: prov });
    }

    pub fn extend(&mut self, other: ConstraintBlock) {
        self.merged_rows += other.merged_rows;
        self.rows.extend(other.rows);
    }

    pub fn count_of(&self, prov: Provenance) -> usize {
        self.rows.iter().filter(|r| r.provenance == prov).count()
    }

    /// Wrap the rows into a feasibility/optimization program over free
    /// lifted variables.
    pub fn into_lp(self, sense: Sense, objective: Vec<f64>, names: Vec<String>) -> LinearProgram {
        let n = objective.len();
        let rows = self
            .rows
            .into_iter()
            .map(|r| {
                debug_assert_eq!(r.coeffs.len(), n);
                Row::new(r.coeffs, r.relation, r.rhs)
            })
            .collect();
        LinearProgram {
            sense,
            objective,
            rows,
            bounds: vec![VarBounds::free(); n],
            integrality: vec![false; n],
            names,
        }
    }
}

/// How degenerate (inactive) uncertainty dimensions are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegenerateRows {
    /// One equality row per degenerate dimension (the default).
    #[default]
    MergeEquality,
    /// The literal lower/upper inequality pair, for exact table bookkeeping.
    SplitPair,
}

/// Lifted coefficients of output i: L_i on the states, Q_i collapsed onto
/// the upper-triangular product columns (mirror entries summed).
pub fn quadratic_row(sys: &QuadraticSystem, i: usize) -> Result<Vec<f64>, LiftError> {
    let n = sys.n();
    if i >= n {
        return Err(LiftError::IndexOutOfRange { index: i, n });
    }
    let idx = LiftedIndex::new(n);
    let mut row = vec![0.0; idx.dim()];
    for j in 0..n {
        row[j] = sys.l()[(i, j)];
    }
    let q_i = sys.q(i);
    for q in 0..n {
        row[idx.col(q, q)] += q_i[(q, q)];
        for r in (q + 1)..n {
            row[idx.col(q, r)] += q_i[(q, r)] + q_i[(r, q)];
        }
    }
    Ok(row)
}

/// The componentwise product block: one `>=` row per ordered facet pair
/// (q, r) encoding b_q b_r - b_r (Ax)_q - b_q (Ax)_r + (A X A')_qr >= 0.
pub fn rlt_rows(poly: &Polytope) -> ConstraintBlock {
    let m = poly.m();
    let n = poly.n();
    let idx = LiftedIndex::new(n);
    let a = poly.a();
    let b = poly.b();
    let mut block = ConstraintBlock::default();
    for q in 0..m {
        for r in 0..m {
            let mut coeffs = vec![0.0; idx.dim()];
            for j in 0..n {
                coeffs[j] = (-b[r]) * a[(q, j)] + (-b[q]) * a[(r, j)];
            }
            for j in 0..n {
                let aq = a[(q, j)];
                if aq == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let prod = aq * a[(r, k)];
                    if prod != 0.0 {
                        coeffs[idx.col(j, k)] += prod;
                    }
                }
            }
            block.push(coeffs, Relation::Ge, -b[q] * b[r], Provenance::Rlt);
        }
    }
    block
}

/// The full base relaxation at one uncertainty box: u-lower rows, u-upper
/// rows, state limits (zero product coefficients), then the product block.
pub fn assemble_base_constraints(
    sys: &QuadraticSystem,
    poly: &Polytope,
    bx: &UncertaintyBox,
) -> Result<ConstraintBlock, LiftError> {
    assemble_with_options(sys, poly, bx, DegenerateRows::MergeEquality)
}

pub fn assemble_with_options(
    sys: &QuadraticSystem,
    poly: &Polytope,
    bx: &UncertaintyBox,
    degenerate: DegenerateRows,
) -> Result<ConstraintBlock, LiftError> {
    let n = sys.n();
    if poly.n() != n {
        return Err(LiftError::Shape(format!(
            "polytope over {} states, system dimension {}",
            poly.n(),
            n
        )));
    }
    if bx.u_min.len() != n || bx.u_max.len() != n || bx.active_mask.len() != n {
        return Err(LiftError::Shape(format!(
            "uncertainty box dimension {} does not match system dimension {}",
            bx.u_min.len(),
            n
        )));
    }
    let idx = LiftedIndex::new(n);
    let mut block = ConstraintBlock::default();
    // Lower bound rows; a degenerate dimension merges its pair into one
    // equality here and is skipped in the upper section.
    for i in 0..n {
        let row = quadratic_row(sys, i)?;
        let degenerate_dim = !bx.active_mask[i];
        if degenerate_dim && degenerate == DegenerateRows::MergeEquality {
            block.push(row, Relation::Eq, bx.u_min[i], Provenance::ULower);
            block.merged_rows += 1;
        } else {
            block.push(row, Relation::Ge, bx.u_min[i], Provenance::ULower);
        }
    }
    for i in 0..n {
        let degenerate_dim = !bx.active_mask[i];
        if degenerate_dim && degenerate == DegenerateRows::MergeEquality {
            continue;
        }
        let row = quadratic_row(sys, i)?;
        block.push(row, Relation::Le, bx.u_max[i], Provenance::UUpper);
    }
    for i in 0..poly.m() {
        let mut coeffs = vec![0.0; idx.dim()];
        for j in 0..n {
            coeffs[j] = poly.a()[(i, j)];
        }
        block.push(coeffs, Relation::Le, poly.b()[i], Provenance::StateLimit);
    }
    block.extend(rlt_rows(poly));
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsys::{box_at_radius, sample};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn lift_dim_values() {
        assert_eq!(lift_dim(2), 5);
        assert_eq!(lift_dim(8), 44);
        assert_eq!(lift_dim(16), 152);
        assert_eq!(lift_dim(26), 377);
        assert_eq!(lift_dim(58), 1769);
    }

    #[test]
    fn index_is_a_bijection() {
        for n in 1..=6 {
            let idx = LiftedIndex::new(n);
            let mut seen = vec![false; idx.dim()];
            for q in 0..n {
                for r in q..n {
                    let c = idx.col(q, r);
                    assert!(c >= n && c < idx.dim());
                    assert!(!seen[c], "column {c} hit twice");
                    seen[c] = true;
                }
            }
            assert!(seen[n..].iter().all(|s| *s));
            assert_eq!(idx.col(1.min(n - 1), 0), idx.col(0, 1.min(n - 1)));
        }
    }

    #[test]
    fn quadratic_row_of_sample() {
        let (sys, _) = sample::quadratic_2d();
        let row = quadratic_row(&sys, 0).unwrap();
        assert_eq!(row, vec![1.0, -3.0, 1.0, 0.0, 0.0]);
        let row = quadratic_row(&sys, 1).unwrap();
        assert_eq!(row, vec![2.0, -1.0, 0.0, 0.0, 1.0]);
        assert!(quadratic_row(&sys, 2).is_err());
    }

    #[test]
    fn quadratic_row_reproduces_eval_on_lifted_points() {
        let (sys, _) = sample::quadratic_2d();
        let idx = LiftedIndex::new(sys.n());
        let x = DVector::from_row_slice(&[1.7, -0.4]);
        let lifted = idx.lift_point(&x);
        let f = crate::qsys::eval_f(&sys, &x);
        for i in 0..sys.n() {
            let row = quadratic_row(&sys, i).unwrap();
            let dot: f64 = row.iter().zip(&lifted).map(|(a, v)| a * v).sum();
            assert_relative_eq!(dot, f[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn rlt_rows_of_sample() {
        let (_, poly) = sample::quadratic_2d();
        let block = rlt_rows(&poly);
        assert_eq!(block.len(), 16);
        // Pair (0,0): facets x1 >= 0.5 against itself.
        let r00 = &block.rows[0];
        assert_eq!(r00.coeffs, vec![-1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(r00.relation, Relation::Ge);
        assert_relative_eq!(r00.rhs, -0.25, epsilon = 1e-15);
        // Pair (0,1): x1 >= 0.5 against x1 <= 3.
        let r01 = &block.rows[1];
        assert_eq!(r01.coeffs, vec![3.5, 0.0, -1.0, 0.0, 0.0]);
        assert_relative_eq!(r01.rhs, 1.5, epsilon = 1e-15);
        // Pair (1,3): x1 <= 3 against x2 <= 3.
        let r13 = &block.rows[4 + 3];
        assert_eq!(r13.coeffs, vec![-3.0, -3.0, 0.0, 1.0, 0.0]);
        assert_relative_eq!(r13.rhs, -9.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_pairs_are_bitwise_identical() {
        let (_, poly) = sample::quadratic_2d();
        let block = rlt_rows(&poly);
        let m = poly.m();
        for q in 0..m {
            for r in 0..m {
                let a = &block.rows[q * m + r];
                let b = &block.rows[r * m + q];
                assert_eq!(a.rhs.to_bits(), b.rhs.to_bits());
                for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn rlt_rows_hold_on_feasible_rank_one_points() {
        let (_, poly) = sample::quadratic_2d();
        let idx = LiftedIndex::new(poly.n());
        let block = rlt_rows(&poly);
        for x in [[0.5, 0.5], [3.0, 3.0], [1.2, 2.7], [0.9, 0.6]] {
            let lifted = idx.lift_point(&DVector::from_row_slice(&x));
            for row in &block.rows {
                let lhs: f64 = row.coeffs.iter().zip(&lifted).map(|(a, v)| a * v).sum();
                assert!(lhs >= row.rhs - 1e-12, "row violated at {x:?}");
            }
        }
    }

    #[test]
    fn assemble_counts_and_order() {
        let (sys, poly) = sample::quadratic_2d();
        let bx = box_at_radius(&sys, 1.0).unwrap();
        let block = assemble_base_constraints(&sys, &poly, &bx).unwrap();
        assert_eq!(block.len(), 24);
        assert_eq!(block.bookkeeping_len(), 24);
        assert_eq!(block.count_of(Provenance::ULower), 2);
        assert_eq!(block.count_of(Provenance::UUpper), 2);
        assert_eq!(block.count_of(Provenance::StateLimit), 4);
        assert_eq!(block.count_of(Provenance::Rlt), 16);
        assert_eq!(block.rows[0].relation, Relation::Ge);
        assert_relative_eq!(block.rows[0].rhs, -3.0, epsilon = 1e-15);
        assert_relative_eq!(block.rows[2].rhs, -1.0, epsilon = 1e-15);
        // State rows carry zero product coefficients.
        for row in &block.rows[4..8] {
            assert_eq!(row.provenance, Provenance::StateLimit);
            assert!(row.coeffs[2..].iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn degenerate_dims_merge_or_split() {
        let (sys, poly) = sample::quadratic_2d();
        let masked = crate::qsys::QuadraticSystem::new(
            (0..2).map(|i| sys.q(i).clone()).collect(),
            sys.l().clone(),
            sys.u_star().clone(),
            DVector::from_row_slice(&[1.0, 0.0]),
        )
        .unwrap();
        let bx = box_at_radius(&masked, 0.5).unwrap();
        let merged = assemble_base_constraints(&masked, &poly, &bx).unwrap();
        assert_eq!(merged.len(), 23);
        assert_eq!(merged.bookkeeping_len(), 24);
        assert_eq!(merged.rows[1].relation, Relation::Eq);
        let split =
            assemble_with_options(&masked, &poly, &bx, DegenerateRows::SplitPair).unwrap();
        assert_eq!(split.len(), 24);
        assert_eq!(split.bookkeeping_len(), 24);
        assert_eq!(split.rows[1].relation, Relation::Ge);
        assert_eq!(split.rows[3].relation, Relation::Le);
        assert_relative_eq!(split.rows[1].rhs, split.rows[3].rhs, epsilon = 1e-15);
    }

    #[test]
    fn lifted_point_satisfies_full_block_when_forecast_reachable() {
        let (sys, poly) = sample::quadratic_2d();
        // The interior Newton root maps exactly to u*, so its lift is
        // feasible for the base block at any radius.
        let check =
            crate::qsys::newton_solve(&sys, sys.u_star(), &DVector::from_row_slice(&[1.0, 1.0]));
        assert!(check.converged);
        let idx = LiftedIndex::new(sys.n());
        let lifted = idx.lift_point(&check.solution);
        for r in [0.0, 0.4, 1.0] {
            let bx = box_at_radius(&sys, r).unwrap();
            let block = assemble_base_constraints(&sys, &poly, &bx).unwrap();
            for row in &block.rows {
                let lhs: f64 = row.coeffs.iter().zip(&lifted).map(|(a, v)| a * v).sum();
                let ok = match row.relation {
                    Relation::Le => lhs <= row.rhs + 1e-9,
                    Relation::Ge => lhs >= row.rhs - 1e-9,
                    Relation::Eq => (lhs - row.rhs).abs() <= 1e-9,
                };
                assert!(ok, "{} row violated at radius {r}", row.provenance);
            }
        }
    }
}
