//! JSON interchange for quadratic systems and their state polytopes.
//!
//! The format is plain nested arrays so any tool can read it; floats
//! survive a write/read cycle bit-identically (shortest-round-trip
//! encoding both ways). A `schema_version` field guards future changes.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::matpower::SystemLegend;
use crate::qsys::{Polytope, QsysError, QuadraticSystem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SysfileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("schema version {found} not supported (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error(transparent)]
    Model(#[from] QsysError),
}

/// On-disk form of a system: n quadratic coefficient matrices `Q`, the
/// linear part `L`, forecast `u_star`, uncertainty mask `e`, and the
/// polytope `A` x <= `b`, all as nested row-major arrays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemFile {
    pub schema_version: u32,
    /// Identifier carried into reports.
    pub name: String,
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub u_star: Vec<f64>,
    pub e: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Newton start for the degree check; all-ones when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// State / equation names when the system came from a conversion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equations: Option<Vec<String>>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl SystemFile {
    pub fn encode(
        name: &str,
        sys: &QuadraticSystem,
        poly: &Polytope,
        x0: Option<&DVector<f64>>,
        legend: Option<&SystemLegend>,
    ) -> Self {
        SystemFile {
            schema_version: SCHEMA_VERSION,
            name: name.to_owned(),
            n: sys.n(),
            q: (0..sys.n()).map(|i| matrix_rows(sys.q(i))).collect(),
            l: matrix_rows(sys.l()),
            u_star: sys.u_star().iter().copied().collect(),
            e: sys.e().iter().copied().collect(),
            a: matrix_rows(poly.a()),
            b: poly.b().iter().copied().collect(),
            x0: x0.map(|v| v.iter().copied().collect()),
            states: legend.map(|lg| lg.states.clone()),
            equations: legend.map(|lg| lg.equations.clone()),
        }
    }

    /// Rebuild the model objects. Shape problems surface as model errors;
    /// a wrong schema version is rejected before anything else.
    pub fn decode(&self) -> Result<(QuadraticSystem, Polytope), SysfileError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SysfileError::Schema { found: self.schema_version });
        }
        let dense = |rows: &Vec<Vec<f64>>, what: &str| -> Result<DMatrix<f64>, SysfileError> {
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, Vec::len);
            if nrows == 0 || rows.iter().any(|r| r.len() != ncols) {
                return Err(SysfileError::Model(QsysError::Shape(format!(
                    "{what} rows have inconsistent lengths"
                ))));
            }
            Ok(DMatrix::from_row_slice(
                nrows,
                ncols,
                &rows.iter().flatten().copied().collect::<Vec<_>>(),
            ))
        };
        let q = self
            .q
            .iter()
            .map(|m| dense(m, "Q"))
            .collect::<Result<Vec<_>, _>>()?;
        let sys = QuadraticSystem::new(
            q,
            dense(&self.l, "L")?,
            DVector::from_row_slice(&self.u_star),
            DVector::from_row_slice(&self.e),
        )?;
        let poly = Polytope::new(dense(&self.a, "A")?, DVector::from_row_slice(&self.b))?;
        Ok((sys, poly))
    }

    /// Newton start for the degree check (stored or all-ones).
    pub fn newton_start(&self) -> DVector<f64> {
        match &self.x0 {
            Some(v) => DVector::from_row_slice(v),
            None => DVector::from_element(self.n, 1.0),
        }
    }
}

pub fn write_system(path: &Path, file: &SystemFile) -> Result<(), SysfileError> {
    let text = serde_json::to_string_pretty(file)?;
    let wrap = |source| SysfileError::Io { path: path.display().to_string(), source };
    let mut out = fs::File::create(path).map_err(wrap)?;
    out.write_all(text.as_bytes())
        .and_then(|()| out.write_all(b"\n"))
        .map_err(|source| SysfileError::Io { path: path.display().to_string(), source })
}

pub fn read_system(path: &Path) -> Result<SystemFile, SysfileError> {
    let text = fs::read_to_string(path)
        .map_err(|source| SysfileError::Io { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

/// The worked example used throughout the docs, as a system file.
pub fn sample_system_file() -> SystemFile {
    let (sys, poly) = crate::qsys::sample::quadratic_2d();
    SystemFile::encode(
        "sample-2d",
        &sys,
        &poly,
        Some(&DVector::from_element(2, 1.0)),
        None,
    )
}
