//! Build a full margin report programmatically, write it to disk, read it
//! back, and render the same table the command-line tool prints.

use robust_margin::lpcore::BuiltinSimplex;
use robust_margin::qsys::sample;
use robust_margin::report::{build_report, read_report, render_table, write_report, ReportRequest};
use robust_margin::upper::OuterMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (sys, poly) = sample::quadratic_2d();
    let backend = BuiltinSimplex;

    let mut request = ReportRequest::new("sample-2d");
    request.mode = OuterMode::SignComplementarity;
    let mut report = build_report(&backend, &sys, &poly, &request);

    println!("backend: {}", report.backend);
    println!("degree caveats:");
    for caveat in &report.degree.caveats {
        println!("  - {caveat}");
    }
    println!(
        "best lower {:?}, upper {:?}, sandwich holds: {}",
        report.best_lower(),
        report.upper_bound(),
        report.sandwich_holds(1e-9)
    );

    // Timings are wall clock and never reproducible; zero them before
    // storing a report anywhere you intend to diff.
    report.zero_timings();
    let path = std::env::temp_dir().join("rmargin_report_example.json");
    write_report(&path, &report)?;
    let back = read_report(&path)?;
    assert_eq!(serde_json::to_string(&report)?, serde_json::to_string(&back)?);
    println!("report round-tripped through {}", path.display());

    println!("\n{}", render_table(&[back]));
    Ok(())
}
