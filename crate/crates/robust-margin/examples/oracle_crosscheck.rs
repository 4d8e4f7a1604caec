//! Cross-check the certified bounds against a brute-force grid oracle on
//! the two-state example. The oracle knows nothing about relaxations or
//! duals; it just samples states and measures distances.

use robust_margin::lower::{margin_search_lower, Procedure};
use robust_margin::lpcore::BuiltinSimplex;
use robust_margin::oracle::{
    boundary_min_distance, certify_reference, inscribed_box_margin, OracleConfig,
};
use robust_margin::qsys::{box_at_radius, sample};
use robust_margin::upper::{margin_upper, OuterMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (sys, poly) = sample::quadratic_2d();
    let backend = BuiltinSimplex;
    let cfg = OracleConfig::with_resolution(192)?;

    let (lower, trail) = margin_search_lower(&backend, &sys, &poly, Procedure::Tightening, 1.0)?;
    let upper = margin_upper(&backend, &sys, &poly, OuterMode::SignComplementarity)?;
    println!("certified: {lower:.6} <= r* <= {upper:.6}");

    // Estimate the margin directly: the widest centered box of forecasts
    // reachable from strictly interior states.
    let active: Vec<bool> = (0..sys.n()).map(|d| sys.e()[d] > 0.0).collect();
    let estimate = inscribed_box_margin(&sys, &poly, sys.u_star(), &active, &cfg)?;
    println!(
        "grid estimate: {:.6} (cell width {:.6})",
        estimate.value, estimate.cell
    );
    assert!(estimate.value >= lower - 2.0 * estimate.cell);
    assert!(estimate.value <= upper + 2.0 * estimate.cell);

    // At the certified radius the boundary must still be off-limits; well
    // beyond the upper bound some reachable forecast touches it.
    let at_lower = boundary_min_distance(&sys, &poly, &box_at_radius(&sys, lower)?, &cfg)?;
    let beyond = boundary_min_distance(&sys, &poly, &box_at_radius(&sys, 2.0 * upper)?, &cfg)?;
    println!("boundary distance at r = lower: {at_lower:.6}");
    println!("boundary distance at r = 2 * upper: {beyond:.6}");
    assert!(beyond == 0.0, "far past the margin the boundary is reachable");

    // Same consistency check, packaged: every certificate in the trail
    // must survive the sampled boundary test.
    for cert in &trail {
        let check = certify_reference(&sys, &poly, cert, &cfg)?;
        assert!(check.consistent, "certificate at r = {} contradicted", cert.radius);
    }
    println!("all {} trail certificates consistent with the oracle", trail.len());
    Ok(())
}
