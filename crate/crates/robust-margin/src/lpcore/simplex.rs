//! Dense two-phase revised simplex with an explicit basis inverse.
//!
//! Determinism contract: fixed-order loops, Dantzig pricing with
//! smallest-index tie breaks, and a Bland fallback after a degenerate
//! streak, so identical inputs pivot identically on every run.
//!
//! Standardization: free variables are split, finite lower bounds shifted,
//! upper bounds become explicit rows, fixed variables are substituted out
//! (branch and bound relies on this), rows are equilibrated to unit infinity
//! norm, and exact duplicate rows are merged. Lifted product constraints
//! come in symmetric pairs that are bitwise equal after construction, so the
//! merge halves the basis size on those instances.

use std::collections::HashSet;

use super::{LinearProgram, LpError, LpSolution, LpStatus, Relation, Sense, SolverBackend, FEAS_TOL};

/// The built-in solver. Stateless; every call standardizes from scratch.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSimplex;

impl SolverBackend for BuiltinSimplex {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        solve_dense(lp)
    }
}

const PIVOT_TOL: f64 = 1e-9;
const SMALL_PIVOT: f64 = 1e-7;
const DEGENERATE_STEP: f64 = 1e-10;
const BLAND_TRIGGER: usize = 60;
const REFACTOR_EVERY: usize = 100;

/// How an original variable appears among the non-negative internal columns.
#[derive(Debug, Clone, Copy)]
enum ColMap {
    Fixed(f64),
    Shifted { col: usize, shift: f64 },
    Negated { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Standardized {
    map: Vec<ColMap>,
    n_internal: usize,
    /// Transformed rows as `coeffs . z (=|<=) rhs` with rhs >= 0 after sign
    /// normalization; `slack_sign` is +1 / -1 for inequality rows, 0 for
    /// equalities.
    rows: Vec<StdRow>,
    trivially_infeasible: bool,
}

struct StdRow {
    coeffs: Vec<f64>,
    rhs: f64,
    slack_sign: i8,
}

fn standardize(lp: &LinearProgram) -> Standardized {
    let n = lp.num_vars();
    let mut map = Vec::with_capacity(n);
    let mut k = 0usize;
    for b in &lp.bounds {
        let entry = match (b.lower.is_finite(), b.upper.is_finite()) {
            (true, true) if b.lower == b.upper => ColMap::Fixed(b.lower),
            (true, _) => {
                k += 1;
                ColMap::Shifted { col: k - 1, shift: b.lower }
            }
            (false, true) => {
                k += 1;
                ColMap::Negated { col: k - 1, offset: b.upper }
            }
            (false, false) => {
                k += 2;
                ColMap::Split { pos: k - 2, neg: k - 1 }
            }
        };
        map.push(entry);
    }

    // Transform rows into the internal column space; Ge rows are negated to Le.
    let mut raw: Vec<(Vec<f64>, bool, f64)> = Vec::with_capacity(lp.rows.len() + n);
    for row in &lp.rows {
        let mut tc = vec![0.0; k];
        let mut rhs = row.rhs;
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match map[j] {
                ColMap::Fixed(v) => rhs -= a * v,
                ColMap::Shifted { col, shift } => {
                    tc[col] += a;
                    rhs -= a * shift;
                }
                ColMap::Negated { col, offset } => {
                    tc[col] -= a;
                    rhs -= a * offset;
                }
                ColMap::Split { pos, neg } => {
                    tc[pos] += a;
                    tc[neg] -= a;
                }
            }
        }
        let (tc, eq, rhs) = match row.relation {
            Relation::Le => (tc, false, rhs),
            Relation::Eq => (tc, true, rhs),
            Relation::Ge => {
                let neg: Vec<f64> = tc.iter().map(|v| -v).collect();
                (neg, false, -rhs)
            }
        };
        raw.push((tc, eq, rhs));
    }
    // Finite upper bounds of shifted columns become explicit rows.
    for (j, b) in lp.bounds.iter().enumerate() {
        if let ColMap::Shifted { col, shift } = map[j] {
            if b.upper.is_finite() {
                let mut tc = vec![0.0; k];
                tc[col] = 1.0;
                raw.push((tc, false, b.upper - shift));
            }
        }
    }

    // Equilibrate, resolve trivial rows, canonicalize zero signs, dedupe.
    let mut trivially_infeasible = false;
    let mut seen: HashSet<(bool, u64, Vec<u64>)> = HashSet::new();
    let mut rows = Vec::with_capacity(raw.len());
    for (mut tc, eq, mut rhs) in raw {
        let scale = tc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let bad = if eq { rhs.abs() > FEAS_TOL } else { rhs < -FEAS_TOL };
            if bad {
                trivially_infeasible = true;
            }
            continue;
        }
        for v in &mut tc {
            *v /= scale;
            if *v == 0.0 {
                *v = 0.0; // clear negative zero so duplicate detection sees one pattern
            }
        }
        rhs /= scale;
        let key = (eq, rhs.to_bits(), tc.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if !seen.insert(key) {
            continue;
        }
        let (coeffs, rhs, slack_sign) = if rhs < 0.0 {
            (tc.iter().map(|v| -v).collect(), -rhs, if eq { 0 } else { -1 })
        } else {
            (tc, rhs, if eq { 0 } else { 1 })
        };
        rows.push(StdRow { coeffs, rhs, slack_sign });
    }

    Standardized { map, n_internal: k, rows, trivially_infeasible }
}

/// Dense working state for the revised simplex: columns of the full
/// (structural + slack + artificial) matrix, the basis, and an explicit
/// inverse maintained by product-form updates with periodic refactorization.
struct Tableau {
    nrows: usize,
    cols: Vec<Vec<f64>>,
    kind: Vec<ColKind>,
    rhs0: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
    iteration_limit: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn build(std_form: &Standardized) -> Tableau {
        let nr = std_form.rows.len();
        let k = std_form.n_internal;
        let mut cols: Vec<Vec<f64>> = (0..k)
            .map(|c| std_form.rows.iter().map(|r| r.coeffs[c]).collect())
            .collect();
        let mut kind = vec![ColKind::Structural; k];
        let mut basis = vec![usize::MAX; nr];
        for (i, row) in std_form.rows.iter().enumerate() {
            if row.slack_sign != 0 {
                let mut col = vec![0.0; nr];
                col[i] = f64::from(row.slack_sign);
                cols.push(col);
                kind.push(ColKind::Slack);
                if row.slack_sign == 1 {
                    basis[i] = cols.len() - 1;
                }
            }
        }
        for (i, b) in basis.iter_mut().enumerate() {
            if *b == usize::MAX {
                let mut col = vec![0.0; nr];
                col[i] = 1.0;
                cols.push(col);
                kind.push(ColKind::Artificial);
                *b = cols.len() - 1;
            }
        }
        let mut in_basis = vec![false; cols.len()];
        for &b in &basis {
            in_basis[b] = true;
        }
        let rhs0: Vec<f64> = std_form.rows.iter().map(|r| r.rhs).collect();
        let mut binv = vec![0.0; nr * nr];
        for i in 0..nr {
            binv[i * nr + i] = 1.0;
        }
        let xb = rhs0.clone();
        Tableau {
            nrows: nr,
            cols,
            kind,
            rhs0,
            basis,
            in_basis,
            binv,
            xb,
            pivots_since_refactor: 0,
            iterations: 0,
            iteration_limit: 50_000 + 200 * nr,
        }
    }

    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let nr = self.nrows;
        let mut y = vec![0.0; nr];
        for i in 0..nr {
            let c = cb[i];
            if c != 0.0 {
                let row = &self.binv[i * nr..(i + 1) * nr];
                for (yr, br) in y.iter_mut().zip(row) {
                    *yr += c * br;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let nr = self.nrows;
        let mut d = vec![0.0; nr];
        for (r, &v) in col.iter().enumerate() {
            if v != 0.0 {
                for i in 0..nr {
                    d[i] += self.binv[i * nr + r] * v;
                }
            }
        }
        d
    }

    /// Rebuild the inverse from the basis columns and recompute the basic
    /// solution, clearing accumulated product-form drift.
    fn refactor(&mut self) -> Result<(), LpError> {
        let nr = self.nrows;
        if nr == 0 {
            return Ok(());
        }
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut bm = vec![0.0; nr * nr];
        for (i, &bj) in self.basis.iter().enumerate() {
            let col = &self.cols[bj];
            for r in 0..nr {
                bm[r * nr + i] = col[r];
            }
        }
        let mut inv = vec![0.0; nr * nr];
        for i in 0..nr {
            inv[i * nr + i] = 1.0;
        }
        for c in 0..nr {
            let mut piv_row = c;
            let mut piv_val = bm[c * nr + c].abs();
            for r in (c + 1)..nr {
                let v = bm[r * nr + c].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return Err(LpError::Backend("singular working basis".into()));
            }
            if piv_row != c {
                for j in 0..nr {
                    bm.swap(c * nr + j, piv_row * nr + j);
                    inv.swap(c * nr + j, piv_row * nr + j);
                }
            }
            let p = bm[c * nr + c];
            for j in 0..nr {
                bm[c * nr + j] /= p;
                inv[c * nr + j] /= p;
            }
            for r in 0..nr {
                if r != c {
                    let f = bm[r * nr + c];
                    if f != 0.0 {
                        for j in 0..nr {
                            bm[r * nr + j] -= f * bm[c * nr + j];
                            inv[r * nr + j] -= f * inv[c * nr + j];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.xb = self.ftran(&self.rhs0.clone());
        for v in &mut self.xb {
            if *v < 0.0 && *v > -1e-8 {
                *v = 0.0;
            }
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Product-form basis change: entering column `q` with direction `d`
    /// replaces the variable at basis position `lr`.
    fn pivot(&mut self, q: usize, lr: usize, d: &[f64], theta: f64) {
        let nr = self.nrows;
        for i in 0..nr {
            self.xb[i] -= theta * d[i];
            if self.xb[i] < 0.0 && self.xb[i] > -1e-9 {
                self.xb[i] = 0.0;
            }
        }
        self.xb[lr] = theta;
        let piv = d[lr];
        // binv <- E . binv with the eta column at position lr.
        let (before, rest) = self.binv.split_at_mut(lr * nr);
        let (prow, after) = rest.split_at_mut(nr);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        let apply = |rows: &mut [f64], base: usize| {
            for (ri, chunk) in rows.chunks_exact_mut(nr).enumerate() {
                let f = d[base + ri];
                if f != 0.0 {
                    for (cv, pv) in chunk.iter_mut().zip(prow.iter()) {
                        *cv -= f * *pv;
                    }
                }
            }
        };
        apply(before, 0);
        apply(after, lr + 1);
        self.in_basis[self.basis[lr]] = false;
        self.basis[lr] = q;
        self.in_basis[q] = true;
        self.pivots_since_refactor += 1;
    }

    /// Sum of the basic artificial values, the negated phase 1 objective.
    fn basic_artificial_sum(&self) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| self.kind[b] == ColKind::Artificial)
            .map(|(i, _)| self.xb[i].max(0.0))
            .sum()
    }

    /// Optimize `obj` over the current basis. Artificial columns never
    /// price back in; in phase 2 any still-basic artificial is forced out
    /// through zero-step pivots when a usable pivot element appears.
    fn run_phase(&mut self, obj: &[f64], phase_two: bool) -> Result<PhaseEnd, LpError> {
        let nr = self.nrows;
        let obj_scale = 1.0 + obj.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rc_tol = 1e-9 * obj_scale;
        let rhs_scale = 1.0 + self.rhs0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut bland = false;
        let mut degenerate_streak = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > self.iteration_limit {
                return Ok(PhaseEnd::IterationLimit);
            }
            // Phase 1 has a known optimum: a zero artificial sum. Once it is
            // reached, any remaining positive reduced cost is pricing noise
            // from an ill-conditioned basis, not an improving direction.
            if !phase_two && self.basic_artificial_sum() <= 1e-12 * rhs_scale {
                return Ok(PhaseEnd::Optimal);
            }
            let cb: Vec<f64> = self.basis.iter().map(|&b| obj[b]).collect();
            let y = self.btran(&cb);
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if self.in_basis[j] || self.kind[j] == ColKind::Artificial {
                    continue;
                }
                let mut rc = obj[j];
                for (r, &v) in self.cols[j].iter().enumerate() {
                    if v != 0.0 {
                        rc -= y[r] * v;
                    }
                }
                if rc > rc_tol {
                    if bland {
                        entering = Some((j, rc));
                        break;
                    }
                    if entering.map_or(true, |(_, best)| rc > best) {
                        entering = Some((j, rc));
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let mut refactored = false;
            loop {
                let d = self.ftran(&self.cols[q].clone());
                // Ratio test; basic artificials in phase 2 leave at step zero.
                let mut choice: Option<(f64, usize, f64)> = None;
                for i in 0..nr {
                    let pinned = phase_two && self.kind[self.basis[i]] == ColKind::Artificial;
                    let candidate = if pinned && d[i].abs() > PIVOT_TOL {
                        Some((0.0, d[i].abs()))
                    } else if d[i] > PIVOT_TOL {
                        Some((self.xb[i].max(0.0) / d[i], d[i]))
                    } else {
                        None
                    };
                    if let Some((ratio, mag)) = candidate {
                        let better = match choice {
                            None => true,
                            Some((r0, i0, m0)) => {
                                if (ratio - r0).abs() <= 1e-12 {
                                    if bland {
                                        self.basis[i] < self.basis[i0]
                                    } else {
                                        mag > m0
                                    }
                                } else {
                                    ratio < r0
                                }
                            }
                        };
                        if better {
                            choice = Some((ratio, i, mag));
                        }
                    }
                }
                let Some((theta, lr, mag)) = choice else {
                    // No admissible pivot row. A stale product-form inverse can
                    // fabricate this: drift yields a ghost reduced cost whose
                    // direction never clears the pivot threshold. Rebuild the
                    // inverse and re-price; only a fresh inverse is believed.
                    if self.pivots_since_refactor > 0 {
                        self.refactor()?;
                        break;
                    }
                    if phase_two {
                        return Ok(PhaseEnd::Unbounded);
                    }
                    // A feasibility subproblem is bounded, so an apparent ray
                    // is numerical. Accept the point if it is feasible within
                    // the tolerance the caller applies afterwards.
                    if self.basic_artificial_sum() <= FEAS_TOL * rhs_scale {
                        return Ok(PhaseEnd::Optimal);
                    }
                    return Err(LpError::Backend(
                        "feasibility subproblem reported unbounded; numerical breakdown".into(),
                    ));
                };
                if mag < SMALL_PIVOT && !refactored && self.pivots_since_refactor > 0 {
                    self.refactor()?;
                    refactored = true;
                    continue;
                }
                self.pivot(q, lr, &d, theta);
                if theta <= DEGENERATE_STEP {
                    degenerate_streak += 1;
                    if degenerate_streak > BLAND_TRIGGER {
                        bland = true;
                    }
                } else {
                    degenerate_streak = 0;
                    bland = false;
                }
                break;
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }
}

fn solve_dense(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let std_form = standardize(lp);
    if std_form.trivially_infeasible {
        return Ok(LpSolution::status_only(LpStatus::Infeasible));
    }
    let mut tab = Tableau::build(&std_form);
    let ncols = tab.cols.len();

    // Phase 1: maximize minus the artificial sum down to zero.
    let needs_phase1 = tab.basis.iter().any(|&b| tab.kind[b] == ColKind::Artificial);
    if needs_phase1 {
        let mut obj1 = vec![0.0; ncols];
        for (j, k) in tab.kind.iter().enumerate() {
            if *k == ColKind::Artificial {
                obj1[j] = -1.0;
            }
        }
        match tab.run_phase(&obj1, false)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => unreachable!("phase 1 objective is bounded"),
            PhaseEnd::IterationLimit => return Ok(LpSolution::status_only(LpStatus::IterationLimit)),
        }
        let rhs_scale = 1.0 + tab.rhs0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let art_sum: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| tab.kind[b] == ColKind::Artificial)
            .map(|(i, _)| tab.xb[i].max(0.0))
            .sum();
        if art_sum > FEAS_TOL * rhs_scale {
            return Ok(LpSolution::status_only(LpStatus::Infeasible));
        }
        drive_out_artificials(&mut tab);
    }

    // Phase 2 objective over internal columns, in Max sense.
    let mut obj2 = vec![0.0; ncols];
    let flip = if lp.sense == Sense::Min { -1.0 } else { 1.0 };
    for (j, &c) in lp.objective.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let c = c * flip;
        match std_form.map[j] {
            ColMap::Fixed(_) => {}
            ColMap::Shifted { col, .. } => obj2[col] += c,
            ColMap::Negated { col, .. } => obj2[col] -= c,
            ColMap::Split { pos, neg } => {
                obj2[pos] += c;
                obj2[neg] -= c;
            }
        }
    }
    match tab.run_phase(&obj2, true)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => return Ok(LpSolution::status_only(LpStatus::Unbounded)),
        PhaseEnd::IterationLimit => return Ok(LpSolution::status_only(LpStatus::IterationLimit)),
    }

    // Map the basic solution back through the variable transforms.
    let mut internal = vec![0.0; std_form.n_internal];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < std_form.n_internal {
            internal[b] = tab.xb[i].max(0.0);
        }
    }
    let point: Vec<f64> = std_form
        .map
        .iter()
        .map(|m| match *m {
            ColMap::Fixed(v) => v,
            ColMap::Shifted { col, shift } => shift + internal[col],
            ColMap::Negated { col, offset } => offset - internal[col],
            ColMap::Split { pos, neg } => internal[pos] - internal[neg],
        })
        .collect();
    let value = lp.objective_at(&point);
    Ok(LpSolution { status: LpStatus::Optimal, point: Some(point), objective_value: Some(value) })
}

/// Zero-step pivots replacing basic artificials with structural or slack
/// columns wherever a usable pivot element exists; rows with none are
/// linearly dependent and keep their artificial pinned at zero.
fn drive_out_artificials(tab: &mut Tableau) {
    for i in 0..tab.nrows {
        if tab.kind[tab.basis[i]] != ColKind::Artificial {
            continue;
        }
        let nr = tab.nrows;
        let binv_row: Vec<f64> = tab.binv[i * nr..(i + 1) * nr].to_vec();
        let mut pick: Option<(usize, Vec<f64>, f64)> = None;
        for j in 0..tab.cols.len() {
            if tab.in_basis[j] || tab.kind[j] == ColKind::Artificial {
                continue;
            }
            let alpha: f64 = tab.cols[j]
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(r, v)| binv_row[r] * v)
                .sum();
            if alpha.abs() > SMALL_PIVOT {
                let d = tab.ftran(&tab.cols[j].clone());
                pick = Some((j, d, alpha));
                break;
            }
        }
        if let Some((j, d, _)) = pick {
            tab.pivot(j, i, &d, 0.0);
        }
    }
}
