//! End-to-end tour on the bundled two-state example: degree check, three
//! certified lower bounds, two upper bounds, and the sandwich they form.

use nalgebra::DVector;
use robust_margin::lower::{margin_search_lower, Procedure};
use robust_margin::lpcore::BuiltinSimplex;
use robust_margin::qsys::{newton_solve, sample};
use robust_margin::upper::{solve_outer, OuterMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (sys, poly) = sample::quadratic_2d();
    let backend = BuiltinSimplex;

    // Degree precondition: the forecast must have a solution with a
    // nonzero Jacobian sign, or no certificate below means anything.
    let x0 = DVector::from_element(sys.n(), 1.0);
    let check = newton_solve(&sys, sys.u_star(), &x0);
    println!(
        "forecast solution: x = [{:.6}, {:.6}], det J = {:.4}, sign = {:+}",
        check.solution[0], check.solution[1], check.jacobian_det, check.sign
    );
    assert!(check.passes(), "degree precondition must hold for the sample");
    assert!(poly.interior_margin(&check.solution) > 0.0);

    let mut best_lower = 0.0f64;
    for procedure in [Procedure::Feasibility, Procedure::Mip, Procedure::Tightening] {
        let (bound, trail) = margin_search_lower(&backend, &sys, &poly, procedure, 1.0)?;
        println!("{procedure:<12} lower bound {bound:.6}  ({} probes)", trail.len());
        best_lower = best_lower.max(bound);
    }

    for mode in [OuterMode::VertexEnumeration, OuterMode::SignComplementarity] {
        let sol = solve_outer(&backend, &sys, &poly, mode)?;
        let upper = sol.z_upper.max(0.0);
        println!(
            "outer {mode:<7} upper bound {upper:.6}  (argmin direction {:?})",
            sol.lambda_argmin
        );
        assert!(
            best_lower <= upper + 1e-9,
            "certified lower bounds never exceed the outer bound"
        );
    }

    println!("margin is sandwiched: {best_lower:.6} <= r* <= outer bounds above");
    Ok(())
}
