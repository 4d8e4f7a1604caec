//! Shared instance generators and property drivers for the integration
//! suites. Every driver is deterministic (seeded ChaCha) and panics with
//! context on the first violation, returning how many checks it ran.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robust_margin::lift::{assemble_base_constraints, LiftedIndex};
use robust_margin::lower::{
    bound_tightening_certificate, lp_feasibility_certificate, margin_search_lower,
    mip_certificate, Procedure,
};
use robust_margin::lpcore::{
    solve_lp, BuiltinSimplex, LinearProgram, LpStatus, Relation, Sense,
};
use robust_margin::matpower::{build_ybus, fixtures, parse_case, to_quadratic_system, BusType};
use robust_margin::oracle::{inscribed_box_margin, OracleConfig};
use robust_margin::qsys::{
    box_at_radius, eval_f, jacobian, newton_solve, sample, Polytope, QuadraticSystem,
};
use robust_margin::upper::{build_inner_max, dualize, solve_outer, OuterMode, UpperError};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A randomly generated instance whose forecast solution is `x_c`, strictly
/// inside an axis-aligned box polytope, with the degree precondition
/// holding by construction (rejection sampled).
pub struct Instance {
    pub sys: QuadraticSystem,
    pub poly: Polytope,
    pub x_c: DVector<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    for _ in 0..50 {
        let x_c = DVector::from_fn(n, |_, _| rng.gen_range(0.6..1.4));
        let q: Vec<DMatrix<f64>> = (0..n)
            .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.4..0.4)))
            .collect();
        let mut l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.8..0.8));
        for i in 0..n {
            l[(i, i)] += 3.0;
        }

        // Forecast chosen so x_c solves it exactly: u* = Q(x_c) + L x_c.
        let probe = QuadraticSystem::new(
            q.clone(),
            l.clone(),
            DVector::zeros(n),
            DVector::from_element(n, 1.0),
        )
        .expect("generator shapes");
        let u_star = eval_f(&probe, &x_c);
        let sys = QuadraticSystem::new(q, l, u_star, DVector::from_element(n, 1.0))
            .expect("generator shapes");

        let lo: Vec<f64> = (0..n).map(|i| x_c[i] - rng.gen_range(0.3..0.9)).collect();
        let hi: Vec<f64> = (0..n).map(|i| x_c[i] + rng.gen_range(0.3..0.9)).collect();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = -1.0;
            b[2 * i] = -lo[i];
            a[(2 * i + 1, i)] = 1.0;
            b[2 * i + 1] = hi[i];
        }
        let poly = Polytope::new(a, b).expect("generator shapes");

        let check = newton_solve(&sys, sys.u_star(), &x_c);
        if check.passes() && poly.interior_margin(&check.solution) > 0.0 {
            return Instance { sys, poly, x_c, lo, hi };
        }
    }
    panic!("instance generator failed 50 rejections in a row");
}

fn row_holds(coeffs: &[f64], relation: Relation, rhs: f64, point: &[f64], tol: f64) -> bool {
    let lhs: f64 = coeffs.iter().zip(point).map(|(c, v)| c * v).sum();
    match relation {
        Relation::Le => lhs <= rhs + tol,
        Relation::Ge => lhs >= rhs - tol,
        Relation::Eq => (lhs - rhs).abs() <= tol,
    }
}

/// (a) Analytic Jacobian against central differences, 1e-5 agreement.
pub fn prop_fd_jacobian(seed: u64, instances: usize) -> usize {
    let mut rng = rng(seed);
    let mut checked = 0;
    for _ in 0..instances {
        let n = rng.gen_range(2..=5);
        let inst = random_instance(&mut rng, n);
        for _ in 0..3 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5));
            let j = jacobian(&inst.sys, &x);
            let h = 1e-6;
            for col in 0..n {
                let mut xp = x.clone();
                xp[col] += h;
                let mut xm = x.clone();
                xm[col] -= h;
                let fd = (eval_f(&inst.sys, &xp) - eval_f(&inst.sys, &xm)) / (2.0 * h);
                for row in 0..n {
                    let diff = (j[(row, col)] - fd[row]).abs();
                    assert!(
                        diff <= 1e-5,
                        "jacobian entry ({row},{col}) off by {diff:.3e} at n = {n}"
                    );
                    checked += 1;
                }
            }
        }
    }
    checked
}

/// (b) The lift of any state inside the polytope satisfies every row of
/// the assembled relaxation, taking the box wide enough to contain F(x).
pub fn prop_rank1_lift_feasible(seed: u64, instances: usize) -> usize {
    let mut rng = rng(seed);
    let mut rows_checked = 0;
    for k in 0..instances {
        let n = rng.gen_range(2..=5);
        let inst = random_instance(&mut rng, n);
        let x = DVector::from_fn(n, |i, _| rng.gen_range(inst.lo[i]..inst.hi[i]));
        let r = (eval_f(&inst.sys, &x) - inst.sys.u_star()).abs().max() + 1.0;
        let bx = box_at_radius(&inst.sys, r).expect("positive radius");
        let block =
            assemble_base_constraints(&inst.sys, &inst.poly, &bx).expect("generator shapes");
        let lifted = LiftedIndex::new(n).lift_point(&x);
        for (i, row) in block.rows.iter().enumerate() {
            assert!(
                row_holds(&row.coeffs, row.relation, row.rhs, &lifted, 1e-8),
                "instance {k}: lifted point violates row {i} ({:?})",
                row.provenance
            );
            rows_checked += 1;
        }
    }
    rows_checked
}

/// (c) Strong duality on every dualized direction: the support-function
/// dual and the primal relaxation maximum agree within 1e-6, and an
/// infeasible dual coincides with an unbounded primal.
pub fn prop_strong_duality(seed: u64) -> usize {
    let backend = BuiltinSimplex;
    let mut rng = rng(seed);
    let mut checked = 0;

    let mut targets: Vec<(QuadraticSystem, Polytope, usize)> = Vec::new();
    let (sys, poly) = sample::quadratic_2d();
    targets.push((sys, poly, 24));
    let case = parse_case(fixtures::CASE5).expect("bundled case");
    let (sys, _) = to_quadratic_system(&case).expect("bundled case");
    let poly = robust_margin::matpower::flow_polytope(&case, 0.1).expect("bundled case");
    targets.push((sys, poly, 4));

    for (sys, poly, directions) in &targets {
        let dual = build_inner_max(sys, poly).expect("well-formed instance");
        let n = sys.n();
        for _ in 0..*directions {
            let mut lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm: f64 = lambda.iter().map(|v| v.abs()).sum();
            for v in &mut lambda {
                *v /= norm;
            }
            let lp = dualize(&dual, &lambda).expect("normalized direction");
            let dual_sol = solve_lp(&backend, &lp).expect("dual solve");

            let mut primal = LinearProgram::new(Sense::Max, dual.g(&lambda));
            for row in 0..dual.rows() {
                primal.push_row(dual.m_matrix()[row].clone(), Relation::Le, dual.b_vector()[row]);
            }
            let primal_sol = solve_lp(&backend, &primal).expect("primal solve");

            match (dual_sol.status, primal_sol.status) {
                (LpStatus::Optimal, LpStatus::Optimal) => {
                    let d = dual_sol.objective_value.expect("optimal");
                    let p = primal_sol.objective_value.expect("optimal");
                    assert!(
                        (d - p).abs() <= 1e-6,
                        "duality gap {:.3e} on n = {n} (dual {d}, primal {p})",
                        (d - p).abs()
                    );
                }
                (LpStatus::Infeasible, LpStatus::Unbounded) => {}
                (ds, ps) => panic!("inconsistent pair: dual {ds}, primal {ps}"),
            }
            checked += 1;
        }
    }
    checked
}

/// Radii that exercise both certified and uncertified outcomes across the
/// generated instances.
const PROBE_RADII: [f64; 5] = [0.05, 0.2, 0.5, 1.0, 3.0];

/// (d) The selector MIP and the facet-enumeration scan always agree on
/// the verdict.
pub fn prop_mip_matches_facets(seed: u64, instances: usize) -> usize {
    let backend = BuiltinSimplex;
    let mut rng = rng(seed);
    let mut checked = 0;
    let mut certified = 0;
    for k in 0..instances {
        let n = rng.gen_range(2..=4);
        let inst = random_instance(&mut rng, n);
        for r in PROBE_RADII {
            let feas =
                lp_feasibility_certificate(&backend, &inst.sys, &inst.poly, r).expect("solve");
            let mip = mip_certificate(&backend, &inst.sys, &inst.poly, r).expect("solve");
            assert_eq!(
                feas.is_certified(),
                mip.is_certified(),
                "instance {k} at r = {r}: feasibility {:?} vs mip {:?}",
                feas.verdict,
                mip.verdict
            );
            checked += 1;
            certified += usize::from(feas.is_certified());
        }
    }
    assert!(certified > 0 && certified < checked, "radii must exercise both verdicts");
    checked
}

/// (e) Whenever the feasibility scan certifies a radius, bound tightening
/// certifies it too.
pub fn prop_tightening_dominates(seed: u64, instances: usize) -> usize {
    let backend = BuiltinSimplex;
    let mut rng = rng(seed);
    let mut implications = 0;
    for k in 0..instances {
        let n = rng.gen_range(2..=4);
        let inst = random_instance(&mut rng, n);
        for r in PROBE_RADII {
            let feas =
                lp_feasibility_certificate(&backend, &inst.sys, &inst.poly, r).expect("solve");
            if !feas.is_certified() {
                continue;
            }
            let tight =
                bound_tightening_certificate(&backend, &inst.sys, &inst.poly, r).expect("solve");
            assert!(
                tight.is_certified(),
                "instance {k} at r = {r}: feasibility certified but tightening did not \
                 ({:?})",
                tight.reason
            );
            implications += 1;
        }
    }
    assert!(implications > 0, "suite never certified anything");

    // On the worked example the tightening margin strictly dominates.
    let (sys, poly) = sample::quadratic_2d();
    let (feas, _) =
        margin_search_lower(&backend, &sys, &poly, Procedure::Feasibility, 1.0).expect("search");
    let (tight, _) =
        margin_search_lower(&backend, &sys, &poly, Procedure::Tightening, 1.0).expect("search");
    assert!(tight >= feas, "tightening bound {tight} below feasibility bound {feas}");
    implications
}

/// (f) Grid-oracle sandwich on plane instances: the sampled inscribed-box
/// margin sits between the certified lower and the outer upper bound,
/// within two grid cells.
pub fn prop_oracle_sandwich(seed: u64, instances: usize) -> usize {
    let backend = BuiltinSimplex;
    let mut rng = rng(seed);
    let cfg = OracleConfig::with_resolution(160).expect("valid resolution");
    let mut checked = 0;

    let mut targets: Vec<(QuadraticSystem, Polytope)> = vec![sample::quadratic_2d()];
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 2);
        targets.push((inst.sys, inst.poly));
    }

    for (k, (sys, poly)) in targets.iter().enumerate() {
        let mut lower = 0.0f64;
        for procedure in [Procedure::Feasibility, Procedure::Tightening] {
            let (bound, _) =
                margin_search_lower(&backend, sys, poly, procedure, 1.0).expect("search");
            lower = lower.max(bound);
        }
        let upper = match solve_outer(&backend, sys, poly, OuterMode::SignComplementarity) {
            Ok(sol) => sol.z_upper.max(0.0),
            Err(UpperError::AllDirectionsUnbounded) => f64::INFINITY,
            Err(err) => panic!("outer solve failed: {err}"),
        };

        let active: Vec<bool> = (0..sys.n()).map(|d| sys.e()[d] > 0.0).collect();
        let est = inscribed_box_margin(sys, poly, sys.u_star(), &active, &cfg)
            .expect("plane instance fits the oracle budget");
        let slack = 2.0 * est.cell;
        assert!(
            est.value >= lower - slack,
            "instance {k}: sampled margin {:.6} under certified lower {lower:.6} - {slack:.6}",
            est.value
        );
        assert!(
            est.value <= upper + slack,
            "instance {k}: sampled margin {:.6} over outer bound {upper:.6} + {slack:.6}",
            est.value
        );
        checked += 1;
    }
    checked
}

/// (g) The converted quadratic system reproduces complex power balance on
/// the bundled 5- and 9-bus cases at random states, to 1e-9.
pub fn prop_power_balance(seed: u64, states: usize) -> usize {
    use num_complex::Complex64;
    let mut rng = rng(seed);
    let mut checked = 0;
    for name in ["case5", "case9"] {
        let case = parse_case(fixtures::by_name(name).expect("bundled")).expect("bundled");
        let y = build_ybus(&case).expect("bundled");
        let (sys, legend) = to_quadratic_system(&case).expect("bundled");
        let nn = sys.n() / 2;

        // Rebuild the state layout from the legend alone: "Re V<id>" in
        // non-slack bus order, then the matching "Im V<id>" block.
        let order: Vec<usize> = legend.states[..nn]
            .iter()
            .map(|s| {
                let id: i64 = s.strip_prefix("Re V").expect("legend shape").parse().unwrap();
                case.buses.iter().position(|b| b.id == id).expect("legend names a bus")
            })
            .collect();
        let slack = case
            .buses
            .iter()
            .position(|b| b.bus_type == BusType::Slack)
            .expect("validated case");
        let slack_id = case.buses[slack].id;
        let vg = case
            .gens
            .iter()
            .filter(|g| g.in_service && g.bus == slack_id && g.vg > 0.0)
            .map(|g| g.vg)
            .last();
        let vm = vg.unwrap_or(if case.buses[slack].vm > 0.0 { case.buses[slack].vm } else { 1.0 });
        let v0 = Complex64::from_polar(vm, case.buses[slack].va_deg.to_radians());

        let coord = |bus_pos: usize| order.iter().position(|&p| p == bus_pos).expect("non-slack");
        for _ in 0..states {
            let x = DVector::from_fn(sys.n(), |j, _| {
                if j < nn {
                    rng.gen_range(0.2..1.6)
                } else {
                    rng.gen_range(-0.6..0.6)
                }
            });
            let fx = eval_f(&sys, &x);
            for (row, label) in legend.equations.iter().enumerate() {
                let (kind, bus_id) = label.split_once(" bus ").expect("legend shape");
                let target: i64 = bus_id.parse().unwrap();
                let i = case.buses.iter().position(|b| b.id == target).unwrap();
                let vi = Complex64::new(x[coord(i)], x[coord(i) + nn]);
                let mut acc = Complex64::new(0.0, 0.0);
                for &k in &order {
                    let vk = Complex64::new(x[coord(k)], x[coord(k) + nn]);
                    acc += vi * (y.entry(i, k) * vk).conj();
                }
                acc += vi * (y.entry(i, slack) * v0).conj();
                let direct = match kind {
                    "P" => acc.re,
                    "Q" => acc.im,
                    _ => vi.norm_sqr(),
                };
                let scale = 1.0 + fx[row].abs().max(direct.abs());
                assert!(
                    (fx[row] - direct).abs() <= 1e-9 * scale,
                    "{name} row {row} ({label}): quadratic {} vs direct {direct}",
                    fx[row]
                );
                checked += 1;
            }
        }
    }
    checked
}
