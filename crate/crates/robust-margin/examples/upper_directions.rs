//! The upper bound probes worst-case forecast directions: for each signed
//! coordinate direction of an uncertain output, a dual program bounds how
//! far the forecast can move before the relaxation leaves the limits.

use robust_margin::lpcore::BuiltinSimplex;
use robust_margin::qsys::sample;
use robust_margin::upper::{build_inner_max, direction_value, solve_outer, OuterMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (sys, poly) = sample::quadratic_2d();
    let backend = BuiltinSimplex;

    let dual = build_inner_max(&sys, &poly)?;
    println!(
        "dual system: {} rows, {} columns (dummy column: {})",
        dual.rows(),
        dual.cols(),
        dual.uses_dummy()
    );

    // Unit directions one at a time; None marks a direction in which the
    // inner maximum is unbounded (no finite certificate from that side).
    for d in 0..sys.n() {
        for sign in [1.0f64, -1.0] {
            let mut lambda = vec![0.0; sys.n()];
            lambda[d] = sign;
            match direction_value(&backend, &dual, &lambda)? {
                Some(v) => println!("  direction {sign:+} e_{d}: value {v:.6}"),
                None => println!("  direction {sign:+} e_{d}: unbounded"),
            }
        }
    }

    let vertex = solve_outer(&backend, &sys, &poly, OuterMode::VertexEnumeration)?;
    let mip = solve_outer(&backend, &sys, &poly, OuterMode::SignComplementarity)?;
    println!("vertex-enumeration bound: {:.6}", vertex.z_upper);
    println!("sign-complementarity bound: {:.6}", mip.z_upper);
    // Mixing signs across dimensions can only find a smaller worst case.
    assert!(mip.z_upper <= vertex.z_upper + 1e-9);
    Ok(())
}
