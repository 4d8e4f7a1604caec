//! Certified bounds on the robustness margin of square quadratic systems.
//!
//! A system F(x) = Q(x) + Lx = u with state limits Ax <= b and a box of
//! uncertain right-hand sides around a forecast u* is *robust feasible* at
//! radius r when every u in the box admits a solution strictly inside the
//! polytope. This crate computes certified lower bounds on the largest such
//! radius (three LP-relaxation procedures over an RLT lifting) and an upper
//! bound (a dualized min-max over the same lifting), plus a MATPOWER power
//! flow front end that produces such systems from grid case files.
//!
//! Modules mirror the pipeline:
//! - [`qsys`]: the quadratic system model, Newton solve, degree precondition;
//! - [`lift`]: lifted variables and the RLT constraint blocks;
//! - [`lpcore`]: backend-neutral LP/MIP types, built-in simplex, branch and bound;
//! - [`lower`]: the three inner certification procedures and the margin search;
//! - [`upper`]: the dualized outer bound;
//! - [`oracle`]: brute-force sampling ground truth for small instances;
//! - [`matpower`]: case parsing, Ybus, conversion to quadratic form;
//! - [`sysfile`] / [`report`]: JSON interchange for systems and margin reports;
//! - [`cli`]: the subcommand implementations behind the `rmargin` binary.

pub mod cli;
pub mod lift;
pub mod lower;
pub mod lpcore;
pub mod matpower;
pub mod oracle;
pub mod qsys;
pub mod report;
pub mod sysfile;
pub mod upper;

pub use lower::{margin_search_lower, Certificate, Procedure, Verdict};
pub use lpcore::{solve_lp, BuiltinSimplex, LinearProgram, LpSolution, LpStatus, SolverBackend};
pub use qsys::{DegreeCheck, Polytope, QuadraticSystem, UncertaintyBox};
pub use report::{build_report, MarginReport, ReportRequest};
pub use sysfile::SystemFile;
pub use upper::{margin_upper, solve_outer, OuterMode};
