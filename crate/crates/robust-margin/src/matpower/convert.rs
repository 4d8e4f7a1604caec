//! Conversion of AC power flow to quadratic-system form.
//!
//! States are the rectangular voltage coordinates of every non-slack bus
//! in bus-table order, x = [Re(V); Im(V)], so n = 2(nbus - 1). The slack
//! voltage is fixed at its setpoint and folded into the linear terms (its
//! coupling column) and the state polytope right-hand sides. Equations
//! are stacked as: active power at every non-slack bus, reactive power at
//! PQ buses, squared voltage magnitude at PV buses; each is x'Q_i x +
//! L_i x = u_i with the forecast u* built from case injections per-unit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::parse::{BusType, MatpowerCase};
use super::ybus::build_ybus;
use super::MatpowerError;
use crate::qsys::{Polytope, QuadraticSystem};

/// Number of u dimensions marked uncertain by default (renewable slots).
pub const DEFAULT_ACTIVE_DIMS: usize = 5;

/// Human-readable names for the states and equations of a converted
/// system, in coordinate order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemLegend {
    pub states: Vec<String>,
    pub equations: Vec<String>,
}

/// Slack elimination bookkeeping shared by the conversion, the polytope
/// builder, and the flat start.
struct NetIndex {
    /// Bus-table position of the slack.
    slack: usize,
    /// Non-slack bus-table positions in table order.
    order: Vec<usize>,
    /// Inverse of `order`: bus-table position -> state slot (None = slack).
    slot: Vec<Option<usize>>,
    /// Fixed slack voltage phasor.
    v0: Complex64,
}

impl NetIndex {
    fn build(case: &MatpowerCase) -> Self {
        let slack = case.slack_position();
        let order: Vec<usize> = (0..case.buses.len()).filter(|&i| i != slack).collect();
        let mut slot = vec![None; case.buses.len()];
        for (k, &i) in order.iter().enumerate() {
            slot[i] = Some(k);
        }
        let slack_bus = &case.buses[slack];
        let vm = in_service_vg(case, slack_bus.id)
            .unwrap_or(if slack_bus.vm > 0.0 { slack_bus.vm } else { 1.0 });
        let v0 = Complex64::from_polar(vm, slack_bus.va_deg.to_radians());
        NetIndex { slack, order, slot, v0 }
    }

    fn n(&self) -> usize {
        2 * self.order.len()
    }

    /// Re / Im state coordinate of a non-slack bus-table position.
    fn re(&self, bus_pos: usize) -> usize {
        self.slot[bus_pos].expect("re() called on slack")
    }

    fn im(&self, bus_pos: usize) -> usize {
        self.slot[bus_pos].expect("im() called on slack") + self.order.len()
    }
}

/// Voltage setpoint of the last in-service generator at a bus, if any.
fn in_service_vg(case: &MatpowerCase, bus_id: i64) -> Option<f64> {
    case.gens
        .iter()
        .filter(|g| g.in_service && g.bus == bus_id)
        .map(|g| g.vg)
        .last()
}

/// Total in-service active generation at a bus, MW.
fn in_service_pg(case: &MatpowerCase, bus_id: i64) -> f64 {
    case.gens.iter().filter(|g| g.in_service && g.bus == bus_id).map(|g| g.pg).sum()
}

pub fn to_quadratic_system(
    case: &MatpowerCase,
) -> Result<(QuadraticSystem, SystemLegend), MatpowerError> {
    to_quadratic_system_with_mask(case, None)
}

/// As [`to_quadratic_system`] with an explicit set of uncertain u
/// dimensions (indices into the stacked equation order) instead of the
/// default first [`DEFAULT_ACTIVE_DIMS`].
pub fn to_quadratic_system_with_mask(
    case: &MatpowerCase,
    active: Option<&[usize]>,
) -> Result<(QuadraticSystem, SystemLegend), MatpowerError> {
    let y = build_ybus(case)?;
    let net = NetIndex::build(case);
    let n = net.n();

    let mut q_tensor = Vec::with_capacity(n);
    let mut l_rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut u_star = Vec::with_capacity(n);
    let mut equations = Vec::with_capacity(n);

    // Slack coupling of bus i: conj(Y[i, slack] * V0) enters the linear term.
    let slack_term = |i: usize| (y.entry(i, net.slack) * net.v0).conj();

    let p_row = |i: usize| -> (DMatrix<f64>, DVector<f64>) {
        let mut q = DMatrix::zeros(n, n);
        let mut l = DVector::zeros(n);
        for &k in &net.order {
            let g = y.entry(i, k).re;
            let b = y.entry(i, k).im;
            q[(net.re(i), net.re(k))] += g;
            q[(net.im(i), net.im(k))] += g;
            q[(net.im(i), net.re(k))] += b;
            q[(net.re(i), net.im(k))] -= b;
        }
        let w = slack_term(i);
        l[net.re(i)] += w.re;
        l[net.im(i)] -= w.im;
        (q, l)
    };
    let q_row = |i: usize| -> (DMatrix<f64>, DVector<f64>) {
        let mut q = DMatrix::zeros(n, n);
        let mut l = DVector::zeros(n);
        for &k in &net.order {
            let g = y.entry(i, k).re;
            let b = y.entry(i, k).im;
            q[(net.im(i), net.re(k))] += g;
            q[(net.re(i), net.im(k))] -= g;
            q[(net.re(i), net.re(k))] -= b;
            q[(net.im(i), net.im(k))] -= b;
        }
        let w = slack_term(i);
        l[net.re(i)] += w.im;
        l[net.im(i)] += w.re;
        (q, l)
    };

    for &i in &net.order {
        let bus = &case.buses[i];
        let (q, l) = p_row(i);
        q_tensor.push(q);
        l_rows.push(l);
        u_star.push((in_service_pg(case, bus.id) - bus.pd) / case.base_mva);
        equations.push(format!("P bus {}", bus.id));
    }
    for &i in &net.order {
        let bus = &case.buses[i];
        if bus.bus_type != BusType::Pq {
            continue;
        }
        let (q, l) = q_row(i);
        q_tensor.push(q);
        l_rows.push(l);
        u_star.push(-bus.qd / case.base_mva);
        equations.push(format!("Q bus {}", bus.id));
    }
    for &i in &net.order {
        let bus = &case.buses[i];
        if bus.bus_type != BusType::Pv {
            continue;
        }
        let mut q = DMatrix::zeros(n, n);
        q[(net.re(i), net.re(i))] = 1.0;
        q[(net.im(i), net.im(i))] = 1.0;
        q_tensor.push(q);
        l_rows.push(DVector::zeros(n));
        let vg = in_service_vg(case, bus.id).unwrap_or(bus.vm);
        u_star.push(vg * vg);
        equations.push(format!("V2 bus {}", bus.id));
    }
    if q_tensor.len() != n {
        return Err(MatpowerError::NonSquare { equations: q_tensor.len(), states: n });
    }

    let mut e = DVector::zeros(n);
    match active {
        None => {
            for i in 0..DEFAULT_ACTIVE_DIMS.min(n) {
                e[i] = 1.0;
            }
        }
        Some(dims) => {
            for &i in dims {
                if i >= n {
                    return Err(MatpowerError::BadMask { index: i, n });
                }
                e[i] = 1.0;
            }
        }
    }

    let l_matrix = DMatrix::from_rows(&l_rows.iter().map(|v| v.transpose()).collect::<Vec<_>>());
    let sys = QuadraticSystem::new(q_tensor, l_matrix, DVector::from_vec(u_star), e)
        .map_err(|err| MatpowerError::MalformedRow {
            table: "conversion",
            line: 0,
            message: err.to_string(),
        })?;

    let mut states: Vec<String> =
        net.order.iter().map(|&i| format!("Re V{}", case.buses[i].id)).collect();
    states.extend(net.order.iter().map(|&i| format!("Im V{}", case.buses[i].id)));
    Ok((sys, SystemLegend { states, equations }))
}

/// Branch-difference state polytope: four rows per in-service branch
/// bounding the real and imaginary coordinate differences by `b_limit` in
/// both directions. Rows touching the slack keep the same form with the
/// fixed slack coordinate moved to the right-hand side.
pub fn flow_polytope(case: &MatpowerCase, b_limit: f64) -> Result<Polytope, MatpowerError> {
    if !(b_limit > 0.0) {
        return Err(MatpowerError::BadFlowLimit(b_limit));
    }
    let net = NetIndex::build(case);
    let pos = case.bus_positions();
    let n = net.n();
    let m = 4 * case.in_service_branches().count();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::from_element(m, b_limit);
    let mut row = 0;
    for br in case.in_service_branches() {
        let f = pos[&br.from];
        let t = pos[&br.to];
        for part in 0..2 {
            let coord = |i: usize| if part == 0 { net.re(i) } else { net.im(i) };
            let fixed = if part == 0 { net.v0.re } else { net.v0.im };
            for (lead, trail) in [(f, t), (t, f)] {
                if lead != net.slack {
                    a[(row, coord(lead))] += 1.0;
                } else {
                    b[row] -= fixed;
                }
                if trail != net.slack {
                    a[(row, coord(trail))] -= 1.0;
                } else {
                    b[row] += fixed;
                }
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, m);
    Polytope::new(a, b).map_err(|err| MatpowerError::MalformedRow {
        table: "polytope",
        line: 0,
        message: err.to_string(),
    })
}

/// Flat-start state: real parts at the voltage setpoints (generator
/// setpoint where present, else the bus table's), imaginary parts zero.
pub fn flat_start(case: &MatpowerCase) -> DVector<f64> {
    let net = NetIndex::build(case);
    let mut x = DVector::zeros(net.n());
    for (k, &i) in net.order.iter().enumerate() {
        let bus = &case.buses[i];
        x[k] = in_service_vg(case, bus.id)
            .unwrap_or(if bus.vm > 0.0 { bus.vm } else { 1.0 });
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::{fixtures, parse_case};
    use crate::qsys::{self, newton_solve};
    use approx::assert_relative_eq;

    fn case5() -> MatpowerCase {
        parse_case(fixtures::CASE5).unwrap()
    }

    #[test]
    fn case5_dimensions_forecast_and_legend() {
        let (sys, legend) = to_quadratic_system(&case5()).unwrap();
        assert_eq!(sys.n(), 8);
        let expect_u = [2.1, -3.0, 0.2349, 4.6651, -0.9861, 1.0, 1.0, 1.0];
        for (got, want) in sys.u_star().iter().zip(expect_u) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(
            legend.equations,
            vec![
                "P bus 1", "P bus 2", "P bus 3", "P bus 5", "Q bus 2", "V2 bus 1", "V2 bus 3",
                "V2 bus 5"
            ]
        );
        assert_eq!(legend.states[0], "Re V1");
        assert_eq!(legend.states[4], "Im V1");
        // Default uncertainty mask: first five u dimensions.
        assert_eq!(sys.active_dims().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn table_sizes_across_bundled_cases() {
        let expect = [("case5", 8, 24), ("case9", 16, 36), ("case14", 26, 80), ("case30", 58, 164)];
        for (name, n, m) in expect {
            let case = parse_case(fixtures::by_name(name).unwrap()).unwrap();
            let (sys, _) = to_quadratic_system(&case).unwrap();
            assert_eq!(sys.n(), n, "{name} states");
            let poly = flow_polytope(&case, 0.001).unwrap();
            assert_eq!(poly.m(), m, "{name} facets");
            assert_eq!(poly.n(), n);
        }
    }

    #[test]
    fn conversion_matches_complex_power_evaluation() {
        // Direct complex-arithmetic power mismatch at deterministic points
        // must agree with the quadratic form to near machine precision.
        for name in ["case5", "case9"] {
            let case = parse_case(fixtures::by_name(name).unwrap()).unwrap();
            let y = build_ybus(&case).unwrap();
            let (sys, legend) = to_quadratic_system(&case).unwrap();
            let net = NetIndex::build(&case);
            let nn = net.order.len();
            for seed in 0..8u32 {
                let x = DVector::from_fn(sys.n(), |j, _| {
                    1.0 + 0.3 * ((seed as f64 + 1.0) * (j as f64 + 1.0)).sin()
                });
                let fx = qsys::eval_f(&sys, &x);
                for (row, label) in legend.equations.iter().enumerate() {
                    let (kind, bus_id) = label.split_once(" bus ").unwrap();
                    let target: i64 = bus_id.parse().unwrap();
                    let i = case.buses.iter().position(|b| b.id == target).unwrap();
                    let vi = Complex64::new(x[net.re(i)], x[net.re(i) + nn]);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &k in &net.order {
                        let vk = Complex64::new(x[net.re(k)], x[net.re(k) + nn]);
                        acc += vi * (y.entry(i, k) * vk).conj();
                    }
                    acc += vi * (y.entry(i, net.slack) * net.v0).conj();
                    let direct = match kind {
                        "P" => acc.re,
                        "Q" => acc.im,
                        _ => vi.norm_sqr(),
                    };
                    assert_relative_eq!(fx[row], direct, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn newton_from_flat_start_solves_bundled_cases() {
        let expect = [("case5", -1), ("case9", 1)];
        for (name, sign) in expect {
            let case = parse_case(fixtures::by_name(name).unwrap()).unwrap();
            let (sys, _) = to_quadratic_system(&case).unwrap();
            let check = newton_solve(&sys, sys.u_star(), &flat_start(&case));
            assert!(check.converged, "{name} diverged");
            assert_eq!(check.sign, sign, "{name} jacobian sign");
            let residual = (qsys::eval_f(&sys, &check.solution) - sys.u_star()).abs().max();
            assert!(residual <= 1e-8, "{name} residual {residual}");
        }
        let c5 = case5();
        let (sys, _) = to_quadratic_system(&c5).unwrap();
        let check = newton_solve(&sys, sys.u_star(), &flat_start(&c5));
        assert_relative_eq!(check.solution[0], 0.99836847, epsilon = 1e-6);
        assert_relative_eq!(check.solution[1], 0.98917438, epsilon = 1e-6);
        assert_relative_eq!(check.solution[4], 0.05709985, epsilon = 1e-6);
    }

    #[test]
    fn polytope_rows_bound_coordinate_differences() {
        let case = case5();
        let poly = flow_polytope(&case, 0.01).unwrap();
        // Branch 1-2: neither endpoint is slack; first four rows are the
        // two directions on Re then Im, all with rhs = B.
        let a = poly.a();
        assert_eq!(a[(0, 0)], 1.0);
        assert_eq!(a[(0, 1)], -1.0);
        assert_eq!(a[(1, 0)], -1.0);
        assert_eq!(a[(1, 1)], 1.0);
        assert_eq!(a[(2, 4)], 1.0);
        assert_eq!(a[(2, 5)], -1.0);
        assert_eq!(poly.b()[0], 0.01);
        // Branch 1-4 touches the slack (bus 4, V0 = 1 + 0j): the trailing
        // slack coordinate folds into the rhs, leaving one nonzero.
        let row = 4;
        assert_eq!(a[(row, 0)], 1.0);
        assert_eq!((0..8).filter(|&j| a[(row, j)] != 0.0).count(), 1);
        assert_relative_eq!(poly.b()[row], 0.01 + 1.0, epsilon = 1e-12);
        assert_relative_eq!(poly.b()[row + 1], 0.01 - 1.0, epsilon = 1e-12);
        // Im-part rows of the same branch fold the zero imaginary slack
        // coordinate: rhs stays B.
        assert_relative_eq!(poly.b()[row + 2], 0.01, epsilon = 1e-12);
        // m is independent of B.
        assert_eq!(flow_polytope(&case, 0.001).unwrap().m(), poly.m());
        assert!(matches!(
            flow_polytope(&case, 0.0),
            Err(MatpowerError::BadFlowLimit(_))
        ));
    }

    #[test]
    fn mask_override_selects_dimensions() {
        let case = case5();
        let (sys, _) = to_quadratic_system_with_mask(&case, Some(&[0, 7])).unwrap();
        assert_eq!(sys.active_dims().collect::<Vec<_>>(), vec![0, 7]);
        assert!(matches!(
            to_quadratic_system_with_mask(&case, Some(&[8])),
            Err(MatpowerError::BadMask { index: 8, n: 8 })
        ));
    }
}
