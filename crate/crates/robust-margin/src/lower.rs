//! Certified lower bounds: three per-radius certification procedures over
//! the lifted relaxation, and the bisection search that turns them into a
//! margin lower bound.
//!
//! All three procedures answer the same question at a fixed radius r: can
//! any point of the relaxed forecast set touch a facet of the state
//! polytope? "No" certifies robust feasibility at r (given the Jacobian
//! sign precondition). Before asking, each procedure checks that the
//! relaxed forecast set is nonempty at all: an empty relaxation proves the
//! true solution set is empty too (the relaxation only over-approximates),
//! so no interior solution exists and the radius is not certifiable. This
//! guards the facet tests from returning vacuous "all clear" verdicts on
//! systems whose forecast solution already violates the state limits.

use serde::{Deserialize, Serialize};

use crate::lift::{assemble_with_options, lift_dim, DegenerateRows, LiftedIndex, Provenance};
use crate::lpcore::{
    solve_binary_bnb, solve_lp, LinearProgram, LpError, LpStatus, Relation, Sense, SolverBackend,
    VarBounds, FEAS_TOL,
};
use crate::qsys::{box_at_radius, coordinate_bounds, Polytope, QsysError, QuadraticSystem};

/// Strictness margin for "strictly below the facet" decisions.
pub const CERT_TOL: f64 = 1e-6;
/// Convergence threshold for the bound-tightening passes.
pub const TIGHTEN_TOL: f64 = 1e-5;
/// Maximum tightening passes per radius.
pub const TIGHTEN_CAP: usize = 20;
/// Default width at which the radius bisection stops.
pub const BISECT_TOL: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum LowerError {
    #[error(transparent)]
    Qsys(#[from] QsysError),
    #[error(transparent)]
    Lift(#[from] crate::lift::LiftError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("search hint must be positive, got {0}")]
    BadHint(f64),
}

/// Which certification procedure produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    Feasibility,
    Mip,
    Tightening,
}

impl std::fmt::Display for Procedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Procedure::Feasibility => write!(f, "feasibility"),
            Procedure::Mip => write!(f, "mip"),
            Procedure::Tightening => write!(f, "tightening"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedRobustFeasible,
    NotCertified,
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::CertifiedRobustFeasible)
    }
}

/// Outcome of one facet's boundary-contact probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FacetStatus {
    FacetClear,
    BoundaryReachable,
    Inconclusive,
}

/// Per-facet evidence inside a certificate: either a probe status
/// (feasibility procedure) or a certified bound z on (Ax)_i (optimization
/// procedures); z <= b_i + feas_tol always holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FacetEvidence {
    Status(FacetStatus),
    Optimum(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetRecord {
    pub facet: usize,
    pub evidence: FacetEvidence,
}

/// One per-radius certification result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub radius: f64,
    pub verdict: Verdict,
    pub evidence: Vec<FacetRecord>,
    pub procedure: Procedure,
    /// Tightening passes completed; absent for the other procedures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Diagnostic attached to non-certifications and flagged terminations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.verdict.is_certified()
    }

    fn not_certified(radius: f64, procedure: Procedure, reason: String) -> Self {
        Certificate {
            radius,
            verdict: Verdict::NotCertified,
            evidence: Vec::new(),
            procedure,
            iterations: None,
            reason: Some(reason),
        }
    }
}

/// Tunable search tolerances and relaxation shape (CLI-overridable).
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub bisect_tol: f64,
    pub tighten_tol: f64,
    pub degenerate: DegenerateRows,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            bisect_tol: BISECT_TOL,
            tighten_tol: TIGHTEN_TOL,
            degenerate: DegenerateRows::MergeEquality,
        }
    }
}

enum Precheck {
    NonEmpty,
    Empty,
    Unknown(String),
}

/// Feasibility of the base relaxation alone (no facet row). Empty means no
/// state can produce any right-hand side in the box, relaxed or otherwise.
fn precheck_base(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
    degenerate: DegenerateRows,
) -> Result<Precheck, LowerError> {
    let bx = box_at_radius(sys, r)?;
    let block = assemble_with_options(sys, poly, &bx, degenerate)?;
    let dim = lift_dim(sys.n());
    let lp = block.into_lp(Sense::Max, vec![0.0; dim], LiftedIndex::new(sys.n()).names());
    let sol = solve_lp(backend, &lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Precheck::NonEmpty,
        LpStatus::Infeasible => Precheck::Empty,
        other => Precheck::Unknown(format!("relaxation feasibility probe ended with {other}")),
    })
}

const EMPTY_RELAXATION: &str =
    "relaxed forecast set is empty at this radius: no state satisfies the limits while \
     producing any right-hand side in the box, so no interior solution can exist";

/// Probe one facet: is {base relaxation, (Ax)_i = b_i} feasible?
pub fn facet_feasibility_certificate(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
    facet: usize,
    degenerate: DegenerateRows,
) -> Result<FacetStatus, LowerError> {
    let bx = box_at_radius(sys, r)?;
    let mut block = assemble_with_options(sys, poly, &bx, degenerate)?;
    push_facet_equality(&mut block, poly, facet, sys.n());
    let dim = lift_dim(sys.n());
    let lp = block.into_lp(Sense::Max, vec![0.0; dim], LiftedIndex::new(sys.n()).names());
    let sol = solve_lp(backend, &lp)?;
    Ok(match sol.status {
        LpStatus::Infeasible => FacetStatus::FacetClear,
        LpStatus::Optimal => FacetStatus::BoundaryReachable,
        LpStatus::IterationLimit | LpStatus::Unbounded => FacetStatus::Inconclusive,
    })
}

fn push_facet_equality(
    block: &mut crate::lift::ConstraintBlock,
    poly: &Polytope,
    facet: usize,
    n: usize,
) {
    let mut coeffs = vec![0.0; lift_dim(n)];
    for j in 0..n {
        coeffs[j] = poly.a()[(facet, j)];
    }
    block.push(coeffs, Relation::Eq, poly.b()[facet], Provenance::Facet);
}

/// Per-facet feasibility testing: certified when every facet's
/// boundary-contact system is infeasible; exits early on the first
/// reachable facet.
pub fn lp_feasibility_certificate(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
) -> Result<Certificate, LowerError> {
    lp_feasibility_with(backend, sys, poly, r, &SearchOptions::default())
}

/// [`lp_feasibility_certificate`] with explicit options.
pub fn lp_feasibility_with(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
    options: &SearchOptions,
) -> Result<Certificate, LowerError> {
    match precheck_base(backend, sys, poly, r, options.degenerate)? {
        Precheck::NonEmpty => {}
        Precheck::Empty => {
            return Ok(Certificate::not_certified(
                r,
                Procedure::Feasibility,
                EMPTY_RELAXATION.into(),
            ))
        }
        Precheck::Unknown(reason) => {
            return Ok(Certificate::not_certified(r, Procedure::Feasibility, reason))
        }
    }
    let mut evidence = Vec::with_capacity(poly.m());
    let mut verdict = Verdict::CertifiedRobustFeasible;
    let mut reason = None;
    for facet in 0..poly.m() {
        let status =
            facet_feasibility_certificate(backend, sys, poly, r, facet, options.degenerate)?;
        evidence.push(FacetRecord { facet, evidence: FacetEvidence::Status(status) });
        match status {
            FacetStatus::FacetClear => {}
            FacetStatus::BoundaryReachable => {
                verdict = Verdict::NotCertified;
                reason = Some(format!("facet {facet} is reachable from the relaxed forecast set"));
                break;
            }
            FacetStatus::Inconclusive => {
                verdict = Verdict::NotCertified;
                reason = Some(format!("facet {facet} probe was inconclusive"));
            }
        }
    }
    Ok(Certificate {
        radius: r,
        verdict,
        evidence,
        procedure: Procedure::Feasibility,
        iterations: None,
        reason,
    })
}

/// Big-R constant: large enough that a deselected facet's row never binds,
/// small enough to stay well-conditioned.
fn big_r(poly: &Polytope) -> Result<f64, LowerError> {
    let bounds = coordinate_bounds(poly)?;
    let x_box = bounds.iter().fold(0.0f64, |m, (lo, hi)| m.max(lo.abs()).max(hi.abs()));
    let b_inf = poly.b().amax();
    let mut row_l1_max = 0.0f64;
    for i in 0..poly.m() {
        let l1: f64 = (0..poly.n()).map(|j| poly.a()[(i, j)].abs()).sum();
        row_l1_max = row_l1_max.max(l1);
    }
    Ok(2.0 * (b_inf + row_l1_max * x_box))
}

/// Single mixed-integer probe: maximize the worst facet slack violation z
/// with a binary selector per facet. Certified when the optimum stays
/// strictly below zero.
pub fn mip_certificate(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
) -> Result<Certificate, LowerError> {
    mip_with(backend, sys, poly, r, &SearchOptions::default())
}

/// [`mip_certificate`] with explicit options.
pub fn mip_with(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
    options: &SearchOptions,
) -> Result<Certificate, LowerError> {
    match precheck_base(backend, sys, poly, r, options.degenerate)? {
        Precheck::NonEmpty => {}
        Precheck::Empty => {
            return Ok(Certificate::not_certified(r, Procedure::Mip, EMPTY_RELAXATION.into()))
        }
        Precheck::Unknown(reason) => {
            return Ok(Certificate::not_certified(r, Procedure::Mip, reason))
        }
    }
    let n = sys.n();
    let m = poly.m();
    let dim = lift_dim(n);
    let bx = box_at_radius(sys, r)?;
    let block = assemble_with_options(sys, poly, &bx, options.degenerate)?;
    let r_big = big_r(poly)?;

    // Variables: lifted block, then z, then the m facet selectors.
    let total = dim + 1 + m;
    let z_col = dim;
    let mut lp = LinearProgram::new(Sense::Max, vec![0.0; total]);
    lp.objective[z_col] = 1.0;
    let mut names = LiftedIndex::new(n).names();
    names.push("z".into());
    names.extend((1..=m).map(|i| format!("d{i}")));
    lp.names = names;
    for (j, b) in lp.bounds.iter_mut().enumerate() {
        if j > z_col {
            *b = VarBounds::range(0.0, 1.0);
        }
    }
    for j in (z_col + 1)..total {
        lp.integrality[j] = true;
    }
    for row in block.rows {
        let mut coeffs = row.coeffs;
        coeffs.resize(total, 0.0);
        lp.push_row(coeffs, row.relation, row.rhs);
    }
    // z <= (Ax)_i - b_i + R(1 - d_i), one per facet.
    for i in 0..m {
        let mut coeffs = vec![0.0; total];
        coeffs[z_col] = 1.0;
        for j in 0..n {
            coeffs[j] = -poly.a()[(i, j)];
        }
        coeffs[z_col + 1 + i] = r_big;
        lp.push_row(coeffs, Relation::Le, r_big - poly.b()[i]);
    }
    let mut selector = vec![0.0; total];
    for j in (z_col + 1)..total {
        selector[j] = 1.0;
    }
    lp.push_row(selector, Relation::Eq, 1.0);

    let sol = solve_binary_bnb(backend, &lp)?;
    if sol.status != LpStatus::Optimal {
        return Ok(Certificate::not_certified(
            r,
            Procedure::Mip,
            format!("selector optimization ended with status {}", sol.status),
        ));
    }
    let z = sol.objective_value.expect("optimal solve carries value");
    let point = sol.point.expect("optimal solve carries point");
    let contact_facet = (0..m)
        .max_by(|&a, &b| {
            point[z_col + 1 + a]
                .partial_cmp(&point[z_col + 1 + b])
                .expect("finite selector values")
        })
        .expect("at least one facet");
    let certified = z < -CERT_TOL;
    // z bounds every facet's slack from above, so it is valid per-facet
    // evidence: (Ax)_i <= b_i + z for all i.
    let evidence = (0..m)
        .map(|facet| FacetRecord {
            facet,
            evidence: FacetEvidence::Optimum(poly.b()[facet] + z),
        })
        .collect();
    Ok(Certificate {
        radius: r,
        verdict: if certified {
            Verdict::CertifiedRobustFeasible
        } else {
            Verdict::NotCertified
        },
        evidence,
        procedure: Procedure::Mip,
        iterations: None,
        reason: (!certified).then(|| {
            format!(
                "boundary contact: worst slack {z:.3e} within {CERT_TOL:.0e} of facet {contact_facet}"
            )
        }),
    })
}

/// Iterated bound tightening: each pass maximizes every facet expression
/// over the current relaxation, then shrinks b to those optima and rebuilds
/// the product rows (b appears inside their coefficients, so the rebuild is
/// mandatory). Certified when the final optima sit strictly below the
/// original b.
pub fn bound_tightening_certificate(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
) -> Result<Certificate, LowerError> {
    bound_tightening_with(backend, sys, poly, r, &SearchOptions::default())
}

/// [`bound_tightening_certificate`] with explicit options.
pub fn bound_tightening_with(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    r: f64,
    options: &SearchOptions,
) -> Result<Certificate, LowerError> {
    let tighten_tol = options.tighten_tol;
    match precheck_base(backend, sys, poly, r, options.degenerate)? {
        Precheck::NonEmpty => {}
        Precheck::Empty => {
            return Ok(Certificate::not_certified(
                r,
                Procedure::Tightening,
                EMPTY_RELAXATION.into(),
            ))
        }
        Precheck::Unknown(reason) => {
            return Ok(Certificate::not_certified(r, Procedure::Tightening, reason))
        }
    }
    let n = sys.n();
    let m = poly.m();
    let dim = lift_dim(n);
    let bx = box_at_radius(sys, r)?;
    let names = LiftedIndex::new(n).names();
    let b_orig = poly.b().clone();
    let mut current = poly.clone();
    let mut z = b_orig.clone();
    let mut iterations = 0usize;
    let mut flagged: Option<String> = None;

    'passes: while iterations < TIGHTEN_CAP {
        let block = assemble_with_options(sys, &current, &bx, options.degenerate)?;
        let base_rows: Vec<_> = block.rows;
        let mut pass_z = current.b().clone();
        for i in 0..m {
            let mut objective = vec![0.0; dim];
            for j in 0..n {
                objective[j] = current.a()[(i, j)];
            }
            let mut lp = LinearProgram::new(Sense::Max, objective);
            lp.names = names.clone();
            for row in &base_rows {
                lp.push_row(row.coeffs.clone(), row.relation, row.rhs);
            }
            let sol = solve_lp(backend, &lp)?;
            match sol.status {
                LpStatus::Optimal => {
                    pass_z[i] = sol.objective_value.expect("optimal solve carries value");
                }
                LpStatus::Infeasible => {
                    // Shrinking b emptied the relaxation: no lifted point is
                    // left at all, so no facet is reachable.
                    z.fill(f64::NEG_INFINITY);
                    flagged =
                        Some("tightened relaxation became empty; no facet reachable".into());
                    iterations += 1;
                    break 'passes;
                }
                other => {
                    // Tightening is best-effort strengthening: a pass solve
                    // that ends without an optimum leaves this row's bound
                    // as it stands, which is always a valid over-cover.
                    flagged = Some(format!(
                        "facet {i} tightening solve ended with {other}; bound kept"
                    ));
                }
            }
        }
        iterations += 1;
        let delta = current
            .b()
            .iter()
            .zip(pass_z.iter())
            .fold(0.0f64, |acc, (b, zi)| acc.max(b - zi));
        z = pass_z.clone();
        current = current.with_b(pass_z)?;
        if delta < tighten_tol {
            break;
        }
        if iterations == TIGHTEN_CAP {
            flagged = Some(format!("tightening stopped at the {TIGHTEN_CAP}-pass cap"));
        }
    }

    let certified = (0..m).all(|i| z[i] < b_orig[i] - CERT_TOL);
    let evidence = (0..m)
        .map(|facet| FacetRecord { facet, evidence: FacetEvidence::Optimum(z[facet]) })
        .collect();
    let reason = if certified {
        flagged
    } else {
        let worst = (0..m)
            .max_by(|&a, &b| {
                (z[a] - b_orig[a]).partial_cmp(&(z[b] - b_orig[b])).expect("finite slacks")
            })
            .expect("at least one facet");
        let base = format!(
            "facet {worst} optimum {:.6} not strictly below its limit {:.6}",
            z[worst], b_orig[worst]
        );
        Some(match flagged {
            Some(f) => format!("{base}; {f}"),
            None => base,
        })
    };
    Ok(Certificate {
        radius: r,
        verdict: if certified {
            Verdict::CertifiedRobustFeasible
        } else {
            Verdict::NotCertified
        },
        evidence,
        procedure: Procedure::Tightening,
        iterations: Some(iterations),
        reason,
    })
}

/// Dispatch one procedure at one radius.
pub fn certify_at(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    procedure: Procedure,
    r: f64,
    options: &SearchOptions,
) -> Result<Certificate, LowerError> {
    match procedure {
        Procedure::Feasibility => lp_feasibility_with(backend, sys, poly, r, options),
        Procedure::Mip => mip_with(backend, sys, poly, r, options),
        Procedure::Tightening => bound_tightening_with(backend, sys, poly, r, options),
    }
}

const MAX_DOUBLINGS: usize = 40;

/// Largest certified radius by bisection: certify r = 0, grow by doubling
/// past the hint until certification fails, then bisect to `bisect_tol`.
/// Returns the largest certified radius with the full certificate trail
/// (monotonicity of certification in r is assumed but every probe is in
/// the trail, so violations would be visible).
pub fn margin_search_lower(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    procedure: Procedure,
    r_hi_hint: f64,
) -> Result<(f64, Vec<Certificate>), LowerError> {
    margin_search_lower_with(backend, sys, poly, procedure, r_hi_hint, &SearchOptions::default())
}

pub fn margin_search_lower_with(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    procedure: Procedure,
    r_hi_hint: f64,
    options: &SearchOptions,
) -> Result<(f64, Vec<Certificate>), LowerError> {
    if !(r_hi_hint > 0.0) || !r_hi_hint.is_finite() {
        return Err(LowerError::BadHint(r_hi_hint));
    }
    let mut trail = Vec::new();
    let probe = |r: f64, trail: &mut Vec<Certificate>| -> Result<bool, LowerError> {
        let cert = certify_at(backend, sys, poly, procedure, r, options)?;
        let ok = cert.is_certified();
        trail.push(cert);
        Ok(ok)
    };

    if !probe(0.0, &mut trail)? {
        return Ok((0.0, trail));
    }
    let (mut lo, mut hi);
    if probe(r_hi_hint, &mut trail)? {
        lo = r_hi_hint;
        hi = r_hi_hint;
        let mut exhausted = true;
        for _ in 0..MAX_DOUBLINGS {
            hi *= 2.0;
            if !probe(hi, &mut trail)? {
                exhausted = false;
                break;
            }
            lo = hi;
        }
        if exhausted {
            return Ok((lo, trail));
        }
    } else {
        lo = 0.0;
        hi = r_hi_hint;
    }
    while hi - lo > options.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut trail)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, trail))
}

/// Shared invariant of all evidence: certified optima never exceed their
/// facet limit by more than the feasibility tolerance.
pub fn evidence_respects_limits(cert: &Certificate, poly: &Polytope) -> bool {
    cert.evidence.iter().all(|rec| match rec.evidence {
        FacetEvidence::Optimum(z) => z <= poly.b()[rec.facet] + FEAS_TOL,
        FacetEvidence::Status(_) => true,
    })
}
