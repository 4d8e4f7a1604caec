//! Assembled margin reports: degree-check summary, every requested lower
//! bound with its certification trail, the outer bound with its
//! minimizing direction, problem sizes, timings, and tolerances, all
//! serializable to JSON. Timings can be zeroed so stored golden reports
//! compare stably across machines.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::lift::lift_dim;
use crate::lower::{margin_search_lower_with, Certificate, Procedure, SearchOptions};
use crate::lpcore::SolverBackend;
use crate::qsys::{newton_solve, validate, Polytope, QuadraticSystem};
use crate::upper::{solve_outer, DirectionValue, OuterMode, UpperError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("report schema version {found} not supported (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
}

/// Tolerances the run was performed with.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    pub bisect_tol: f64,
    pub tighten_tol: f64,
}

/// Outcome of the Jacobian-sign precondition at the forecast.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DegreeSummary {
    pub converged: bool,
    pub sign: i8,
    pub jacobian_det: f64,
    pub solution: Vec<f64>,
    /// Whether the found solution is strictly inside the state polytope.
    pub interior: bool,
    /// Standing limitations of the precondition, spelled out per run.
    pub caveats: Vec<String>,
}

impl DegreeSummary {
    pub fn passes(&self) -> bool {
        self.converged && self.sign != 0
    }
}

/// Variable / constraint counts of each procedure's optimization problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct SizeTable {
    pub n: usize,
    pub m: usize,
    pub lift_dim: usize,
    pub feasibility_vars: usize,
    pub feasibility_cons: usize,
    pub mip_vars: usize,
    pub mip_cons: usize,
    pub outer_vars: usize,
    pub outer_cons: usize,
}

impl SizeTable {
    pub fn for_instance(sys: &QuadraticSystem, poly: &Polytope) -> Self {
        let n = sys.n();
        let m = poly.m();
        let lift = lift_dim(n);
        let base_cons = 2 * n + m + m * m;
        let dummy = usize::from(sys.u_star().iter().any(|u| *u != 0.0));
        SizeTable {
            n,
            m,
            lift_dim: lift,
            feasibility_vars: lift,
            feasibility_cons: base_cons,
            mip_vars: lift + m + 1,
            mip_cons: base_cons + m + 1,
            outer_vars: m + m * m + 2 * dummy,
            outer_cons: lift + dummy,
        }
    }
}

/// One lower-bound procedure's result: the certified radius (absent when
/// the run failed outright) and the full probe trail.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LowerSection {
    pub procedure: Procedure,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub trail: Vec<Certificate>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The outer bound, or the explicit marker for why there is none.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum UpperOutcome {
    Finite {
        mode: OuterMode,
        /// Raw direction minimum clamped at zero (a margin is a radius).
        bound: f64,
        /// Unclamped minimum; negative means even the forecast lies
        /// outside the relaxed image.
        raw_minimum: f64,
        lambda_argmin: Vec<f64>,
        directions: Vec<DirectionValue>,
        seconds: f64,
    },
    Unbounded {
        mode: OuterMode,
        seconds: f64,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MarginReport {
    pub schema_version: u32,
    pub system: String,
    pub backend: String,
    pub sizes: SizeTable,
    /// Value-level model violations; solves are skipped when non-empty.
    pub validation: Vec<String>,
    pub degree: DegreeSummary,
    pub lowers: Vec<LowerSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lowers_suppressed: Option<String>,
    pub upper: UpperOutcome,
    pub tolerances: Tolerances,
    pub seconds_total: f64,
}

impl MarginReport {
    /// Largest successful certified lower bound across procedures.
    pub fn best_lower(&self) -> Option<f64> {
        self.lowers.iter().filter_map(|s| s.bound).fold(None, |acc, v| {
            Some(acc.map_or(v, |a: f64| a.max(v)))
        })
    }

    /// The clamped upper bound when one was computed.
    pub fn upper_bound(&self) -> Option<f64> {
        match &self.upper {
            UpperOutcome::Finite { bound, .. } => Some(*bound),
            _ => None,
        }
    }

    /// Every finite lower bound must sit under the finite upper bound.
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        match self.upper_bound() {
            Some(upper) => self.lowers.iter().filter_map(|s| s.bound).all(|lo| lo <= upper + tol),
            None => true,
        }
    }

    /// Zero every wall-clock field for stable golden-file comparison.
    pub fn zero_timings(&mut self) {
        self.seconds_total = 0.0;
        for section in &mut self.lowers {
            section.seconds = 0.0;
        }
        match &mut self.upper {
            UpperOutcome::Finite { seconds, .. } | UpperOutcome::Unbounded { seconds, .. } => {
                *seconds = 0.0;
            }
            UpperOutcome::Skipped { .. } => {}
        }
    }
}

/// What to run and how, for [`build_report`].
#[derive(Debug, Clone)]
pub struct ReportRequest {
    pub name: String,
    pub procedures: Vec<Procedure>,
    pub mode: OuterMode,
    pub options: SearchOptions,
    /// Initial upper probe for the lower-bound search.
    pub r_hi_hint: f64,
    /// Newton start for the degree check; all-ones when absent.
    pub x0: Option<DVector<f64>>,
}

impl ReportRequest {
    pub fn new(name: &str) -> Self {
        ReportRequest {
            name: name.to_owned(),
            procedures: vec![Procedure::Feasibility, Procedure::Mip, Procedure::Tightening],
            mode: OuterMode::VertexEnumeration,
            options: SearchOptions::default(),
            r_hi_hint: 1.0,
            x0: None,
        }
    }
}

/// Run the degree check, the requested lower procedures, and the outer
/// bound, and assemble the report. Failures become diagnostics inside the
/// report rather than errors: a failed degree check suppresses the lower
/// bounds (their precondition is unmet) while the outer bound still runs,
/// and model-validation violations suppress all solves.
pub fn build_report(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    request: &ReportRequest,
) -> MarginReport {
    let total = Instant::now();
    let sizes = SizeTable::for_instance(sys, poly);
    let validation = validate(sys, poly);

    let ones = DVector::from_element(sys.n(), 1.0);
    let x0 = request.x0.as_ref().unwrap_or(&ones);
    let check = newton_solve(sys, sys.u_star(), x0);
    let interior = check.converged && poly.interior_margin(&check.solution) > 0.0;
    let mut caveats =
        vec!["uniqueness of the forecast solution inside the polytope is not verified".to_owned()];
    if !check.passes() {
        caveats.push(
            "degree precondition failed: Newton diverged or the Jacobian sign is zero".to_owned(),
        );
    } else if !interior {
        caveats.push("forecast solution is not strictly interior to the state polytope".to_owned());
    }
    let degree = DegreeSummary {
        converged: check.converged,
        sign: check.sign,
        jacobian_det: check.jacobian_det,
        solution: check.solution.iter().copied().collect(),
        interior,
        caveats,
    };

    let mut lowers = Vec::new();
    let mut lowers_suppressed = None;
    if !validation.is_empty() {
        lowers_suppressed = Some(format!("model validation failed: {}", validation.join("; ")));
    } else if !degree.passes() {
        lowers_suppressed = Some(
            "degree precondition unmet: lower-bound certificates would be meaningless".to_owned(),
        );
    } else {
        for &procedure in &request.procedures {
            let clock = Instant::now();
            let outcome = margin_search_lower_with(
                backend,
                sys,
                poly,
                procedure,
                request.r_hi_hint,
                &request.options,
            );
            let seconds = clock.elapsed().as_secs_f64();
            match outcome {
                Ok((bound, trail)) => lowers.push(LowerSection {
                    procedure,
                    bound: Some(bound),
                    trail,
                    seconds,
                    error: None,
                }),
                Err(err) => lowers.push(LowerSection {
                    procedure,
                    bound: None,
                    trail: Vec::new(),
                    seconds,
                    error: Some(err.to_string()),
                }),
            }
        }
    }

    let upper = if validation.is_empty() {
        let clock = Instant::now();
        match solve_outer(backend, sys, poly, request.mode) {
            Ok(sol) => UpperOutcome::Finite {
                mode: sol.mode,
                bound: sol.z_upper.max(0.0),
                raw_minimum: sol.z_upper,
                lambda_argmin: sol.lambda_argmin,
                directions: sol.directions,
                seconds: clock.elapsed().as_secs_f64(),
            },
            Err(UpperError::AllDirectionsUnbounded) => UpperOutcome::Unbounded {
                mode: request.mode,
                seconds: clock.elapsed().as_secs_f64(),
            },
            Err(err) => UpperOutcome::Skipped { reason: err.to_string() },
        }
    } else {
        UpperOutcome::Skipped {
            reason: format!("model validation failed: {}", validation.join("; ")),
        }
    };

    MarginReport {
        schema_version: SCHEMA_VERSION,
        system: request.name.clone(),
        backend: backend.name().to_owned(),
        sizes,
        validation,
        degree,
        lowers,
        lowers_suppressed,
        upper,
        tolerances: Tolerances {
            bisect_tol: request.options.bisect_tol,
            tighten_tol: request.options.tighten_tol,
        },
        seconds_total: total.elapsed().as_secs_f64(),
    }
}

pub fn write_report(path: &Path, report: &MarginReport) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text + "\n")
        .map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

pub fn read_report(path: &Path) -> Result<MarginReport, ReportError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    let report: MarginReport = serde_json::from_str(&text)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(ReportError::Schema { found: report.schema_version });
    }
    Ok(report)
}

/// Render reports as an aligned text table, one row per procedure with
/// its problem sizes, bound, and wall-clock time.
pub fn render_table(reports: &[MarginReport]) -> String {
    let mut rows: Vec<[String; 6]> = vec![[
        "system".into(),
        "procedure".into(),
        "vars".into(),
        "cons".into(),
        "bound".into(),
        "seconds".into(),
    ]];
    for report in reports {
        let fmt_bound = |b: Option<f64>| b.map_or("-".to_owned(), |v| format!("{v:.6}"));
        for section in &report.lowers {
            let (vars, cons) = match section.procedure {
                Procedure::Mip => (report.sizes.mip_vars, report.sizes.mip_cons),
                _ => (report.sizes.feasibility_vars, report.sizes.feasibility_cons),
            };
            rows.push([
                report.system.clone(),
                format!("{} (lower)", section.procedure),
                vars.to_string(),
                cons.to_string(),
                fmt_bound(section.bound),
                format!("{:.3}", section.seconds),
            ]);
        }
        let (label, bound, seconds) = match &report.upper {
            UpperOutcome::Finite { mode, bound, seconds, .. } => {
                (format!("outer {mode}"), Some(*bound), *seconds)
            }
            UpperOutcome::Unbounded { mode, seconds } => {
                (format!("outer {mode}: unbounded"), None, *seconds)
            }
            UpperOutcome::Skipped { .. } => ("outer: skipped".to_owned(), None, 0.0),
        };
        rows.push([
            report.system.clone(),
            label,
            report.sizes.outer_vars.to_string(),
            report.sizes.outer_cons.to_string(),
            fmt_bound(bound),
            format!("{seconds:.3}"),
        ]);
    }
    let mut widths = [0usize; 6];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
