//! Text export of linear programs in the widely read `.lp` interchange
//! format, plus a backend decorator that dumps every program it is asked to
//! solve before delegating.
//!
//! Files round-trip through external solvers for auditing; column order in
//! the Bounds section follows the program's own variable order (states
//! first, then lifted products, then any auxiliaries), which the builders
//! guarantee.

use std::cell::Cell;
use std::io::Write;
use std::path::PathBuf;

use super::{LinearProgram, LpError, LpSolution, Relation, Sense, SolverBackend};

/// Render one coefficient/name term with an explicit leading sign.
fn push_term(out: &mut String, first: bool, coeff: f64, name: &str) {
    if first {
        if coeff < 0.0 {
            out.push_str("- ");
        }
    } else if coeff < 0.0 {
        out.push_str(" - ");
    } else {
        out.push_str(" + ");
    }
    out.push_str(&format!("{} {}", coeff.abs(), name));
}

fn render_linear(coeffs: &[f64], names: &[String]) -> String {
    let mut out = String::new();
    let mut first = true;
    for (c, name) in coeffs.iter().zip(names) {
        if *c == 0.0 {
            continue;
        }
        push_term(&mut out, first, *c, name);
        first = false;
    }
    if first {
        // Every expression needs at least one term to stay parseable.
        out.push_str(&format!("0 {}", names.first().map(String::as_str).unwrap_or("x1")));
    }
    out
}

/// Serialize `lp` into `.lp` text.
pub fn render_lp(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str(match lp.sense {
        Sense::Max => "Maximize\n",
        Sense::Min => "Minimize\n",
    });
    out.push_str(" obj: ");
    out.push_str(&render_linear(&lp.objective, &lp.names));
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        out.push_str(&format!(
            " c{}: {} {} {}\n",
            i + 1,
            render_linear(&row.coeffs, &lp.names),
            rel,
            row.rhs
        ));
    }
    out.push_str("Bounds\n");
    for (name, b) in lp.names.iter().zip(&lp.bounds) {
        let line = match (b.lower.is_finite(), b.upper.is_finite()) {
            (true, true) if b.lower == b.upper => format!(" {} = {}\n", name, b.lower),
            (true, true) => format!(" {} <= {} <= {}\n", b.lower, name, b.upper),
            (true, false) => format!(" {} >= {}\n", name, b.lower),
            (false, true) => format!(" -inf <= {} <= {}\n", name, b.upper),
            (false, false) => format!(" {} free\n", name),
        };
        out.push_str(&line);
    }
    if lp.integrality.iter().any(|b| *b) {
        out.push_str("Binaries\n");
        for (name, &is_bin) in lp.names.iter().zip(&lp.integrality) {
            if is_bin {
                out.push_str(&format!(" {}\n", name));
            }
        }
    }
    out.push_str("End\n");
    out
}

/// Write `lp` to `path` in `.lp` format.
pub fn write_lp_file(lp: &LinearProgram, path: &std::path::Path) -> Result<(), LpError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_lp(lp).as_bytes())?;
    Ok(())
}

/// Decorator that writes every solved program to numbered `.lp` files in a
/// directory, then delegates to the wrapped backend. File numbering follows
/// solve order, which is deterministic for deterministic callers.
pub struct ExportingBackend<B> {
    inner: B,
    dir: PathBuf,
    counter: Cell<usize>,
    label: String,
}

impl<B: SolverBackend> ExportingBackend<B> {
    pub fn new(inner: B, dir: PathBuf) -> Self {
        let label = format!("exporting({})", inner.name());
        ExportingBackend { inner, dir, counter: Cell::new(0), label }
    }

    pub fn files_written(&self) -> usize {
        self.counter.get()
    }
}

impl<B: SolverBackend> SolverBackend for ExportingBackend<B> {
    fn name(&self) -> &str {
        &self.label
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let n = self.counter.get() + 1;
        self.counter.set(n);
        std::fs::create_dir_all(&self.dir)?;
        write_lp_file(lp, &self.dir.join(format!("solve_{n:05}.lp")))?;
        self.inner.solve(lp)
    }
}
