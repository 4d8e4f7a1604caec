//! Command-line front end: convert grid cases to system files, compute
//! bound reports, sweep flow limits into plot-ready CSV, and render report
//! tables.
//!
//! Exit codes: 0 for success (including diagnostic outcomes such as a
//! failed degree check, which still produces a report), 1 for internal
//! solver errors, 2 for usage and I/O errors. Output files are written
//! atomically (temp file plus rename) so interrupted runs never leave a
//! half-written artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::lower::{margin_search_lower_with, Procedure, SearchOptions};
use crate::lpcore::{BuiltinSimplex, ExportingBackend, ExternalSimplex, SolverBackend};
use crate::matpower::{
    flat_start, flow_polytope, parse_case, to_quadratic_system_with_mask, MatpowerCase,
};
use crate::qsys::{Polytope, QuadraticSystem};
use crate::report::{build_report, read_report, render_table, write_report, ReportRequest};
use crate::sysfile::{read_system, write_system, SystemFile};
use crate::upper::{solve_outer, OuterMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Error carrying the process exit code it should map to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INTERNAL, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rmargin",
    version,
    about = "Certified bounds on the robustness margin of square quadratic systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a grid case file into a quadratic-system JSON file.
    Convert(ConvertArgs),
    /// Compute lower and upper margin bounds for a system JSON file.
    Bounds(BoundsArgs),
    /// Run the bound procedures across a list of flow limits, to CSV.
    Sweep(SweepArgs),
    /// Render one or more report JSON files as an aligned text table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcedureArg {
    Feasibility,
    Mip,
    Tightening,
    All,
}

impl ProcedureArg {
    fn procedures(self) -> Vec<Procedure> {
        match self {
            ProcedureArg::Feasibility => vec![Procedure::Feasibility],
            ProcedureArg::Mip => vec![Procedure::Mip],
            ProcedureArg::Tightening => vec![Procedure::Tightening],
            ProcedureArg::All => {
                vec![Procedure::Feasibility, Procedure::Mip, Procedure::Tightening]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OuterModeArg {
    /// Probe the signed coordinate directions of every active dimension.
    Vertex,
    /// Single mixed-integer program over sign patterns.
    Mip,
}

impl From<OuterModeArg> for OuterMode {
    fn from(arg: OuterModeArg) -> Self {
        match arg {
            OuterModeArg::Vertex => OuterMode::VertexEnumeration,
            OuterModeArg::Mip => OuterMode::SignComplementarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    /// The bundled dense simplex.
    Builtin,
    /// The external solver crate, for cross-checking.
    External,
}

fn make_backend(which: BackendArg, export_dir: Option<&Path>) -> Box<dyn SolverBackend> {
    let inner: Box<dyn SolverBackend> = match which {
        BackendArg::Builtin => Box::new(BuiltinSimplex),
        BackendArg::External => Box::new(ExternalSimplex),
    };
    match export_dir {
        Some(dir) => Box::new(ExportingBackend::new(inner, dir.to_path_buf())),
        None => inner,
    }
}

/// Search knobs shared by `bounds` and `sweep`.
#[derive(Debug, Args)]
pub struct SolveFlags {
    /// Which lower-bound procedure to run.
    #[arg(long, value_enum, default_value_t = ProcedureArg::All)]
    pub procedure: ProcedureArg,

    /// How the outer upper-bound problem is solved.
    #[arg(long, value_enum, default_value_t = OuterModeArg::Vertex)]
    pub outer_mode: OuterModeArg,

    /// Width at which the radius bisection stops.
    #[arg(long, default_value_t = crate::lower::BISECT_TOL)]
    pub bisect_tol: f64,

    /// Convergence threshold for the bound-tightening passes.
    #[arg(long, default_value_t = crate::lower::TIGHTEN_TOL)]
    pub tighten_tol: f64,

    /// LP backend.
    #[arg(long, value_enum, default_value_t = BackendArg::Builtin)]
    pub backend: BackendArg,

    /// Emit degenerate uncertainty dimensions as inequality pairs instead
    /// of merged equality rows (matches published constraint counts).
    #[arg(long)]
    pub split_degenerate: bool,

    /// Initial probe radius for the lower-bound searches.
    #[arg(long, default_value_t = 1.0)]
    pub r_hi: f64,
}

impl SolveFlags {
    fn options(&self) -> SearchOptions {
        SearchOptions {
            bisect_tol: self.bisect_tol,
            tighten_tol: self.tighten_tol,
            degenerate: if self.split_degenerate {
                crate::lift::DegenerateRows::SplitPair
            } else {
                crate::lift::DegenerateRows::MergeEquality
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Grid case file (MATPOWER-style .m text).
    pub case: PathBuf,

    /// Per-coordinate flow limit B for the state polytope.
    #[arg(long, short = 'B', default_value_t = 0.001)]
    pub flow_limit: f64,

    /// Comma-separated uncertain output indices (default: first five).
    #[arg(long, value_delimiter = ',')]
    pub mask: Option<Vec<usize>>,

    /// Output system JSON path.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// System JSON file produced by `convert` (or written by hand).
    pub system: PathBuf,

    #[command(flatten)]
    pub solve: SolveFlags,

    /// Directory receiving one .lp file per solve, for replaying against
    /// other solvers.
    #[arg(long)]
    pub export_lp: Option<PathBuf>,

    /// Write the report JSON here instead of stdout.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Grid case file (MATPOWER-style .m text).
    pub case: PathBuf,

    /// Comma-separated flow limits to sweep (empty: header-only CSV).
    #[arg(long, short = 'B', value_delimiter = ',')]
    pub flow_limits: Vec<f64>,

    /// Comma-separated uncertain output indices (default: first five).
    #[arg(long, value_delimiter = ',')]
    pub mask: Option<Vec<usize>>,

    #[command(flatten)]
    pub solve: SolveFlags,

    /// Worker threads for the sweep cells.
    #[arg(long, default_value_t = 2)]
    pub jobs: usize,

    /// Output CSV path.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files to render.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Convert(args) => cmd_convert(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}

fn read_case(path: &Path) -> Result<MatpowerCase, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    parse_case(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn convert_case(
    case: &MatpowerCase,
    mask: Option<&[usize]>,
    flow_limit: f64,
) -> Result<(QuadraticSystem, Polytope, crate::matpower::SystemLegend), CliError> {
    let (sys, legend) =
        to_quadratic_system_with_mask(case, mask).map_err(|e| CliError::usage(e.to_string()))?;
    let poly = flow_polytope(case, flow_limit).map_err(|e| CliError::usage(e.to_string()))?;
    Ok((sys, poly, legend))
}

/// Write through a sibling temp file and rename, so readers never observe
/// a partially written artifact.
fn atomically<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&Path) -> Result<(), CliError>,
{
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    write(&tmp)?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<(), CliError> {
    let case = read_case(&args.case)?;
    let (sys, poly, legend) = convert_case(&case, args.mask.as_deref(), args.flow_limit)?;
    let name = args
        .case
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_owned());
    let x0 = flat_start(&case);
    let file = SystemFile::encode(&name, &sys, &poly, Some(&x0), Some(&legend));
    atomically(&args.out, |tmp| {
        write_system(tmp, &file).map_err(|e| CliError::usage(e.to_string()))
    })?;
    println!(
        "wrote {}: n = {}, m = {}, B = {}",
        args.out.display(),
        sys.n(),
        poly.m(),
        args.flow_limit
    );
    Ok(())
}

pub fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let file = read_system(&args.system).map_err(|e| CliError::usage(e.to_string()))?;
    let (sys, poly) = file.decode().map_err(|e| CliError::usage(e.to_string()))?;
    let request = ReportRequest {
        name: file.name.clone(),
        procedures: args.solve.procedure.procedures(),
        mode: args.solve.outer_mode.into(),
        options: args.solve.options(),
        r_hi_hint: args.solve.r_hi,
        x0: Some(file.newton_start()),
    };
    let backend = make_backend(args.solve.backend, args.export_lp.as_deref());
    let report = build_report(&backend, &sys, &poly, &request);
    match &args.out {
        Some(path) => {
            atomically(path, |tmp| {
                write_report(tmp, &report).map_err(|e| CliError::usage(e.to_string()))
            })?;
            println!("wrote {}", path.display());
        }
        None => {
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::internal(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

/// One sweep cell: a lower procedure or the outer bound at one flow limit.
#[derive(Debug, Clone, Copy)]
enum CellKind {
    Lower(Procedure),
    Upper(OuterMode),
}

struct SweepRow {
    flow_limit: f64,
    procedure: String,
    bound_type: &'static str,
    value: Option<f64>,
    seconds: f64,
    error: Option<String>,
}

fn run_cell(
    backend: &dyn SolverBackend,
    sys: &QuadraticSystem,
    poly: &Polytope,
    kind: CellKind,
    flow_limit: f64,
    options: &SearchOptions,
    r_hi: f64,
) -> SweepRow {
    let start = Instant::now();
    let (procedure, bound_type, outcome) = match kind {
        CellKind::Lower(proc) => {
            let outcome = margin_search_lower_with(backend, sys, poly, proc, r_hi, options)
                .map(|(r, _trail)| r)
                .map_err(|e| e.to_string());
            (proc.to_string(), "lower", outcome)
        }
        CellKind::Upper(mode) => {
            let outcome = solve_outer(backend, sys, poly, mode)
                .map(|sol| sol.z_upper.max(0.0))
                .map_err(|e| e.to_string());
            (format!("outer-{mode}"), "upper", outcome)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(value) => SweepRow {
            flow_limit,
            procedure,
            bound_type,
            value: Some(value),
            seconds,
            error: None,
        },
        Err(error) => SweepRow {
            flow_limit,
            procedure,
            bound_type,
            value: None,
            seconds,
            error: Some(error),
        },
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let case = read_case(&args.case)?;
    let case_name = args
        .case
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_owned());
    let options = args.solve.options();

    // One (system, polytope) pair per flow limit; the system itself does
    // not depend on B, but keeping cells self-contained keeps workers free
    // of cross-cell state.
    let mut cells: Vec<(f64, CellKind)> = Vec::new();
    for &b in &args.flow_limits {
        for proc in args.solve.procedure.procedures() {
            cells.push((b, CellKind::Lower(proc)));
        }
        cells.push((b, CellKind::Upper(args.solve.outer_mode.into())));
    }

    let (sys, instances) = if args.flow_limits.is_empty() {
        (None, Vec::new())
    } else {
        let (sys, poly0, _legend) =
            convert_case(&case, args.mask.as_deref(), args.flow_limits[0])?;
        let mut instances = vec![(args.flow_limits[0], poly0)];
        for &b in &args.flow_limits[1..] {
            let poly = flow_polytope(&case, b).map_err(|e| CliError::usage(e.to_string()))?;
            instances.push((b, poly));
        }
        (Some(sys), instances)
    };

    let results: Vec<Mutex<Option<SweepRow>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = args.jobs.clamp(1, cells.len().max(1));
    let backend_kind = args.solve.backend;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let backend = make_backend(backend_kind, None);
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let (b, kind) = cells[i];
                    let sys = sys.as_ref().expect("cells imply at least one flow limit");
                    let poly = &instances
                        .iter()
                        .find(|(limit, _)| *limit == b)
                        .expect("every cell's limit was instantiated")
                        .1;
                    let row = run_cell(&backend, sys, poly, kind, b, &options, args.solve.r_hi);
                    *results[i].lock().expect("no worker panics while holding the lock") =
                        Some(row);
                }
            });
        }
    });

    let mut out = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        writer
            .write_record(["case", "B", "procedure", "bound_type", "value", "seconds", "error"])
            .and_then(|()| {
                for slot in &results {
                    let row = slot
                        .lock()
                        .expect("workers finished")
                        .take()
                        .expect("every cell ran");
                    writer.write_record([
                        case_name.as_str(),
                        &row.flow_limit.to_string(),
                        &row.procedure,
                        row.bound_type,
                        &row.value.map(|v| v.to_string()).unwrap_or_default(),
                        &format!("{:.3}", row.seconds),
                        row.error.as_deref().unwrap_or(""),
                    ])?;
                }
                writer.flush().map_err(csv::Error::from)
            })
            .map_err(|e| CliError::internal(format!("csv: {e}")))?;
    }

    atomically(&args.out, |tmp| {
        fs::write(tmp, &out)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", tmp.display())))
    })?;
    println!("wrote {} ({} rows)", args.out.display(), cells.len());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    if args.reports.is_empty() {
        return Err(CliError::usage("no report files given"));
    }
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        reports.push(read_report(path).map_err(|e| CliError::usage(e.to_string()))?);
    }
    let text = render_table(&reports);
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(())
}
