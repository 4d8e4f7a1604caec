//! Inspect the certificate trail of a lower-bound search: every radius the
//! bisection probed, its verdict, and why uncertified probes failed.

use robust_margin::lower::{margin_search_lower, Procedure, Verdict};
use robust_margin::lpcore::BuiltinSimplex;
use robust_margin::qsys::sample;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (sys, poly) = sample::quadratic_2d();
    let backend = BuiltinSimplex;

    let (bound, trail) = margin_search_lower(&backend, &sys, &poly, Procedure::Feasibility, 0.1)?;
    println!("certified lower bound: {bound:.6}  ({} probes)\n", trail.len());
    println!("{:>10}  {:<13}  detail", "radius", "verdict");
    for cert in &trail {
        let verdict = match cert.verdict {
            Verdict::CertifiedRobustFeasible => "certified",
            Verdict::NotCertified => "not certified",
        };
        let detail = cert.reason.as_deref().unwrap_or("all facets clear");
        println!("{:>10.6}  {verdict:<13}  {detail}", cert.radius);
    }

    // The search is monotone: the largest certified probe is the bound and
    // every certified radius is below every uncertified one.
    let certified_max = trail
        .iter()
        .filter(|c| c.is_certified())
        .map(|c| c.radius)
        .fold(0.0f64, f64::max);
    assert_eq!(certified_max, bound);
    Ok(())
}
