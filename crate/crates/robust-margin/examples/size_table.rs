//! Reproduce the problem-size bookkeeping for every bundled grid case
//! without solving anything: variable and constraint counts follow from
//! the network shape alone.

use robust_margin::matpower::{fixtures, flow_polytope, parse_case, to_quadratic_system};
use robust_margin::report::SizeTable;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:>8}  {:>4}  {:>4}  {:>9}  {:>9}  {:>9}  {:>9}",
        "case", "n", "m", "feas vars", "feas cons", "mip vars", "mip cons"
    );
    for (name, text) in fixtures::ALL {
        let case = parse_case(text)?;
        let (sys, _) = to_quadratic_system(&case)?;
        let poly = flow_polytope(&case, 0.001)?;
        let sizes = SizeTable::for_instance(&sys, &poly);
        println!(
            "{name:>8}  {:>4}  {:>4}  {:>9}  {:>9}  {:>9}  {:>9}",
            sys.n(),
            poly.m(),
            sizes.feasibility_vars,
            sizes.feasibility_cons,
            sizes.mip_vars,
            sizes.mip_cons
        );
    }
    Ok(())
}
