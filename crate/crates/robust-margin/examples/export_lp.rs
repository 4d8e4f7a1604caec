//! Record every linear program a certification run solves as .lp files,
//! so the whole run can be replayed against an independent solver.

use robust_margin::lower::{lp_feasibility_certificate, mip_certificate};
use robust_margin::lpcore::{BuiltinSimplex, ExportingBackend};
use robust_margin::qsys::sample;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (sys, poly) = sample::quadratic_2d();
    let dir = std::env::temp_dir().join("rmargin_lp_export_example");
    let _ = std::fs::remove_dir_all(&dir);

    let backend = ExportingBackend::new(BuiltinSimplex, dir.clone());

    let cert = lp_feasibility_certificate(&backend, &sys, &poly, 1.0)?;
    println!(
        "feasibility at r = 1.0: certified = {} after {} solves",
        cert.is_certified(),
        backend.files_written()
    );

    let before = backend.files_written();
    let cert = mip_certificate(&backend, &sys, &poly, 1.0)?;
    println!(
        "mip at r = 1.0: certified = {} after {} more solves",
        cert.is_certified(),
        backend.files_written() - before
    );

    let mut files: Vec<_> = std::fs::read_dir(&dir)?
        .map(|entry| entry.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("{} files in {}:", files.len(), dir.display());
    for name in files.iter().take(3) {
        println!("  {name}");
    }
    println!("  ...");

    // The export is a pure decorator: file numbering equals solve count.
    assert_eq!(files.len(), backend.files_written());
    let first = std::fs::read_to_string(dir.join(&files[0]))?;
    let preview: String = first.lines().take(4).collect::<Vec<_>>().join("\n");
    println!("first file starts with:\n{preview}");
    Ok(())
}
