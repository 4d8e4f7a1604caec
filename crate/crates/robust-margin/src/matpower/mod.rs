//! MATPOWER front end: parse `.m` case files, build the bus admittance
//! matrix, and convert the AC power-flow equations (rectangular voltage
//! coordinates, slack eliminated) into the quadratic-system form consumed
//! by the bound procedures, together with the branch-difference state
//! polytope.

mod convert;
mod parse;
mod ybus;

pub use convert::{
    flat_start, flow_polytope, to_quadratic_system, to_quadratic_system_with_mask, SystemLegend,
};
pub use parse::{parse_case, Branch, Bus, BusType, Gen, MatpowerCase};
pub use ybus::{build_ybus, AdmittanceMatrix};

/// Everything that can go wrong between a case file and a quadratic system.
/// Parse-stage variants carry the 1-based line number of the offending text.
#[derive(Debug, thiserror::Error)]
pub enum MatpowerError {
    #[error("line {line}: malformed {table} row: {message}")]
    MalformedRow { table: &'static str, line: usize, message: String },
    #[error("missing required table mpc.{0}")]
    MissingTable(&'static str),
    #[error("missing mpc.baseMVA assignment")]
    MissingBaseMva,
    #[error("line {line}: empty {table} table")]
    EmptyTable { table: &'static str, line: usize },
    #[error("line {line}: duplicate bus id {id}")]
    DuplicateBusId { id: i64, line: usize },
    #[error("line {line}: reference to unknown bus {id}")]
    UnknownBus { id: i64, line: usize },
    #[error("line {line}: bus type {value} is not PQ (1), PV (2), or slack (3)")]
    BadBusType { value: f64, line: usize },
    #[error("case must have exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("in-service branch {from}-{to} has zero impedance")]
    ZeroImpedance { from: i64, to: i64 },
    #[error("flow limit must be positive, got {0}")]
    BadFlowLimit(f64),
    #[error("uncertain dimension {index} out of range for an {n}-dimensional system")]
    BadMask { index: usize, n: usize },
    #[error("conversion produced {equations} equations for {states} states")]
    NonSquare { equations: usize, states: usize },
}

/// Bundled case files used by tests, examples, and documentation.
pub mod fixtures {
    pub const CASE5: &str = include_str!("../../cases/case5.m");
    pub const CASE9: &str = include_str!("../../cases/case9.m");
    pub const CASE14: &str = include_str!("../../cases/case14.m");
    pub const CASE30: &str = include_str!("../../cases/case30.m");
    pub const CASE57: &str = include_str!("../../cases/case57.m");

    /// (name, text) pairs in size order.
    pub const ALL: [(&str, &str); 5] = [
        ("case5", CASE5),
        ("case9", CASE9),
        ("case14", CASE14),
        ("case30", CASE30),
        ("case57", CASE57),
    ];

    pub fn by_name(name: &str) -> Option<&'static str> {
        ALL.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
    }
}
