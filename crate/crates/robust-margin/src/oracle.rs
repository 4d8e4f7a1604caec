//! Brute-force sampled ground truth for small instances (n <= 4):
//! boundary-contact distances, inscribed-box margin estimates, and
//! cross-checks of certificates against sampling. Deterministic grids, no
//! randomness; all distances are l-infinity on u-space because the
//! uncertainty set is a box.

use nalgebra::DVector;

use crate::lower::Certificate;
use crate::qsys::{
    box_at_radius, coordinate_bounds, eval_f, Polytope, QsysError, QuadraticSystem,
    UncertaintyBox,
};

pub const MIN_RESOLUTION: usize = 16;
pub const MAX_DIMS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("grid resolution must be at least {MIN_RESOLUTION}, got {0}")]
    BadResolution(usize),
    #[error("sampled oracle is limited to {MAX_DIMS} dimensions, got {0}")]
    TooManyDims(usize),
    #[error("sampling would need {needed} evaluations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: usize },
    #[error(transparent)]
    Qsys(#[from] QsysError),
}

/// Grid resolution per dimension and the total evaluation budget.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    resolution: usize,
    budget: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { resolution: 256, budget: 20_000_000 }
    }
}

impl OracleConfig {
    pub fn new(resolution: usize, budget: usize) -> Result<Self, OracleError> {
        if resolution < MIN_RESOLUTION {
            return Err(OracleError::BadResolution(resolution));
        }
        Ok(OracleConfig { resolution, budget })
    }

    pub fn with_resolution(resolution: usize) -> Result<Self, OracleError> {
        Self::new(resolution, OracleConfig::default().budget)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    fn charge(&self, needed: u128) -> Result<(), OracleError> {
        if needed > self.budget as u128 {
            return Err(OracleError::BudgetExceeded { needed, budget: self.budget });
        }
        Ok(())
    }
}

fn check_dims(n: usize) -> Result<(), OracleError> {
    if n > MAX_DIMS {
        return Err(OracleError::TooManyDims(n));
    }
    Ok(())
}

/// l-infinity distance from a point to the uncertainty box (0 inside).
fn box_distance(ubox: &UncertaintyBox, u: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for d in 0..u.len() {
        let below = ubox.u_min[d] - u[d];
        let above = u[d] - ubox.u_max[d];
        worst = worst.max(below).max(above);
    }
    worst.max(0.0)
}

/// Odometer over `k` digits in 0..base; calls `f` with each combination.
fn for_each_index(k: usize, base: usize, mut f: impl FnMut(&[usize])) {
    let mut digits = vec![0usize; k];
    if k == 0 {
        f(&digits);
        return;
    }
    loop {
        f(&digits);
        let mut pos = 0;
        loop {
            digits[pos] += 1;
            if digits[pos] < base {
                break;
            }
            digits[pos] = 0;
            pos += 1;
            if pos == k {
                return;
            }
        }
    }
}

/// Minimum over sampled facet points of the distance from F(x) to the
/// box: a sampled upper bound on the smallest boundary-contact distance.
/// Returns infinity when no facet sample lies in the polytope.
///
/// Each facet is gridded by solving its equality for the coordinate with
/// the largest coefficient while the others sweep the polytope's
/// coordinate bounding box; samples outside the polytope are discarded.
pub fn boundary_min_distance(
    sys: &QuadraticSystem,
    poly: &Polytope,
    ubox: &UncertaintyBox,
    cfg: &OracleConfig,
) -> Result<f64, OracleError> {
    let n = sys.n();
    check_dims(n)?;
    let res = cfg.resolution;
    let per_facet = (res as u128).pow(n as u32 - 1);
    cfg.charge(per_facet * poly.m() as u128)?;
    let bounds = coordinate_bounds(poly)?;

    let a = poly.a();
    let b = poly.b();
    let mut best = f64::INFINITY;
    let mut x = DVector::zeros(n);
    for i in 0..poly.m() {
        let Some(pivot) = (0..n).max_by(|&p, &q| {
            a[(i, p)].abs().partial_cmp(&a[(i, q)].abs()).expect("finite facet row")
        }) else {
            continue;
        };
        if a[(i, pivot)] == 0.0 {
            continue; // zero row; validate() reports these separately
        }
        let free: Vec<usize> = (0..n).filter(|&j| j != pivot).collect();
        for_each_index(free.len(), res, |digits| {
            for (slot, &j) in digits.iter().zip(&free) {
                let (lo, hi) = bounds[j];
                let t = if res == 1 { 0.5 } else { *slot as f64 / (res - 1) as f64 };
                x[j] = lo + t * (hi - lo);
            }
            let partial: f64 = free.iter().map(|&j| a[(i, j)] * x[j]).sum();
            x[pivot] = (b[i] - partial) / a[(i, pivot)];
            if poly.contains(&x, 1e-9) {
                best = best.min(box_distance(ubox, &eval_f(sys, &x)));
            }
        });
    }
    Ok(best)
}

/// A sampled margin value together with the image-grid cell size that
/// bounds its accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginEstimate {
    pub value: f64,
    pub cell: f64,
}

/// Sampled estimate of the largest radius r such that every u in the
/// masked box around `u_star` is the image of some interior sample,
/// within one image-grid cell.
///
/// Interior samples of the polytope are rasterized into an occupancy grid
/// over the active u dimensions (inactive images must pin to `u_star`
/// within a cell); the estimate is the widest fully occupied cell shell.
pub fn inscribed_box_margin(
    sys: &QuadraticSystem,
    poly: &Polytope,
    u_star: &DVector<f64>,
    active: &[bool],
    cfg: &OracleConfig,
) -> Result<MarginEstimate, OracleError> {
    let n = sys.n();
    check_dims(n)?;
    let res = cfg.resolution;
    // Occupancy cells at half the sampling pitch, else pitch mismatch
    // between the state grid's image and the cells punches spurious holes.
    let grid_res = res / 2;
    let active_dims: Vec<usize> = (0..n).filter(|&d| active[d]).collect();
    let na = active_dims.len();
    let state_samples = (res as u128).pow(n as u32);
    let grid_cells = (grid_res as u128).pow(na as u32);
    cfg.charge(state_samples.max(grid_cells))?;
    let bounds = coordinate_bounds(poly)?;

    // Pass 1: collect interior images and the active-dim extent around u*.
    let mut images: Vec<DVector<f64>> = Vec::new();
    let mut x = DVector::zeros(n);
    let mut extent: f64 = 0.0;
    for_each_index(n, res, |digits| {
        for (j, slot) in digits.iter().enumerate() {
            let (lo, hi) = bounds[j];
            let t = if res == 1 { 0.5 } else { *slot as f64 / (res - 1) as f64 };
            x[j] = lo + t * (hi - lo);
        }
        if poly.interior_margin(&x) > 0.0 {
            let fx = eval_f(sys, &x);
            for &d in &active_dims {
                extent = extent.max((fx[d] - u_star[d]).abs());
            }
            images.push(fx);
        }
    });
    if images.is_empty() || na == 0 {
        return Ok(MarginEstimate { value: 0.0, cell: 0.0 });
    }

    // Pass 2: occupancy over [u* - half, u* + half]^na, uniform cells.
    let half = extent.max(1e-12) * (1.0 + 1e-9);
    let cell = 2.0 * half / grid_res as f64;
    let mut occupied = vec![false; grid_cells as usize];
    let index_of = |fx: &DVector<f64>| -> Option<usize> {
        let mut flat = 0usize;
        for &d in &active_dims {
            let offset = (fx[d] - (u_star[d] - half)) / cell;
            if !(0.0..grid_res as f64).contains(&offset) {
                return None;
            }
            flat = flat * grid_res + offset as usize;
        }
        Some(flat)
    };
    let pin_ok = |fx: &DVector<f64>| {
        (0..n).all(|d| active[d] || (fx[d] - u_star[d]).abs() <= cell)
    };
    for fx in &images {
        if pin_ok(fx) {
            if let Some(flat) = index_of(fx) {
                occupied[flat] = true;
            }
        }
    }

    // Widest k with every cell within k of the center occupied.
    let center = (grid_res / 2) as i64;
    let mut k_ok: i64 = -1;
    'widen: for k in 0..=(grid_res as i64) {
        let span = 2 * k + 1;
        let mut digits = vec![0i64; na];
        let mut done = false;
        while !done {
            if digits.iter().any(|&d| d == 0 || d == span - 1) || k == 0 {
                let mut flat = 0i64;
                let mut inside = true;
                for &d in digits.iter() {
                    let idx = center - k + d;
                    if !(0..grid_res as i64).contains(&idx) {
                        inside = false;
                        break;
                    }
                    flat = flat * grid_res as i64 + idx;
                }
                if !inside || !occupied[flat as usize] {
                    break 'widen;
                }
            }
            done = true;
            for d in digits.iter_mut() {
                *d += 1;
                if *d < span {
                    done = false;
                    break;
                }
                *d = 0;
            }
        }
        k_ok = k;
    }
    Ok(MarginEstimate { value: (k_ok.max(0) as f64) * cell, cell })
}

/// Outcome of replaying a certificate against the sampled boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCheck {
    pub consistent: bool,
    /// Sampled boundary distance at the certificate's radius; absent when
    /// the certificate made no claim (nothing to contradict).
    pub sampled_boundary_distance: Option<f64>,
}

/// Cross-check a lower-bound certificate: inconsistent iff it certified
/// radius r but a sampled facet point maps into the radius-r box.
pub fn certify_reference(
    sys: &QuadraticSystem,
    poly: &Polytope,
    cert: &Certificate,
    cfg: &OracleConfig,
) -> Result<ReferenceCheck, OracleError> {
    if !cert.is_certified() {
        return Ok(ReferenceCheck { consistent: true, sampled_boundary_distance: None });
    }
    let ubox = box_at_radius(sys, cert.radius)?;
    let distance = boundary_min_distance(sys, poly, &ubox, cfg)?;
    Ok(ReferenceCheck {
        consistent: distance > 0.0,
        sampled_boundary_distance: Some(distance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lower::lp_feasibility_certificate;
    use crate::lpcore::BuiltinSimplex;
    use crate::qsys::sample;
    use nalgebra::{DMatrix, DVector};

    fn toy() -> (QuadraticSystem, Polytope) {
        sample::quadratic_2d()
    }

    /// F = x on the box [-1, 1]^2.
    fn identity(u_star: [f64; 2]) -> (QuadraticSystem, Polytope) {
        let sys = QuadraticSystem::new(
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
            DMatrix::identity(2, 2),
            DVector::from_row_slice(&u_star),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let poly = Polytope::new(
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            DVector::from_element(4, 1.0),
        )
        .unwrap();
        (sys, poly)
    }

    #[test]
    fn config_invariants() {
        assert!(matches!(OracleConfig::with_resolution(15), Err(OracleError::BadResolution(15))));
        let cfg = OracleConfig::new(64, 100).unwrap();
        let (sys, poly) = toy();
        let ubox = box_at_radius(&sys, 1.0).unwrap();
        assert!(matches!(
            boundary_min_distance(&sys, &poly, &ubox, &cfg),
            Err(OracleError::BudgetExceeded { .. })
        ));
        let five = QuadraticSystem::new(
            (0..5).map(|_| DMatrix::zeros(5, 5)).collect(),
            DMatrix::identity(5, 5),
            DVector::zeros(5),
            DVector::from_element(5, 1.0),
        )
        .unwrap();
        let wide = Polytope::new(
            DMatrix::from_fn(10, 5, |i, j| if i / 2 == j { if i % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 }),
            DVector::from_element(10, 1.0),
        )
        .unwrap();
        let ubox5 = box_at_radius(&five, 0.5).unwrap();
        assert!(matches!(
            boundary_min_distance(&five, &wide, &ubox5, &OracleConfig::default()),
            Err(OracleError::TooManyDims(5))
        ));
    }

    #[test]
    fn boundary_contact_tracks_the_margin() {
        let (sys, poly) = toy();
        let cfg = OracleConfig::default();
        // Above the outer bound 2.63462 the boundary must touch the box.
        let wide = box_at_radius(&sys, 2.8).unwrap();
        assert_eq!(boundary_min_distance(&sys, &poly, &wide, &cfg).unwrap(), 0.0);
        // Below the certified radius 1.20454 it cannot.
        let narrow = box_at_radius(&sys, 1.0).unwrap();
        assert!(boundary_min_distance(&sys, &poly, &narrow, &cfg).unwrap() > 0.0);
        // A box engulfing the whole boundary image trivially touches it.
        let huge = box_at_radius(&sys, 100.0).unwrap();
        assert_eq!(boundary_min_distance(&sys, &poly, &huge, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn inscribed_margin_of_identity_map() {
        let (sys, poly) = identity([0.0, 0.0]);
        let cfg = OracleConfig::default();
        let est = inscribed_box_margin(&sys, &poly, sys.u_star(), &[true, true], &cfg).unwrap();
        assert!((est.value - 1.0).abs() <= 2.0 * est.cell, "{est:?}");
        // Forecast on the image boundary: margin collapses to zero.
        let (edge, poly) = identity([1.0, 0.0]);
        let est = inscribed_box_margin(&edge, &poly, edge.u_star(), &[true, true], &cfg).unwrap();
        assert!(est.value <= 2.0 * est.cell, "{est:?}");
    }

    #[test]
    fn inscribed_margin_of_sample_lands_between_bounds() {
        let (sys, poly) = toy();
        let cfg = OracleConfig::default();
        let est = inscribed_box_margin(&sys, &poly, sys.u_star(), &[true, true], &cfg).unwrap();
        assert!(
            est.value >= 1.70 - 2.0 * est.cell && est.value <= 2.64 + 2.0 * est.cell,
            "{est:?}"
        );
    }

    #[test]
    fn reference_check_flags_corrupted_certificates() {
        let (sys, poly) = toy();
        let backend = BuiltinSimplex;
        let cfg = OracleConfig::default();
        let honest = lp_feasibility_certificate(&backend, &sys, &poly, 1.0).unwrap();
        assert!(honest.is_certified());
        let check = certify_reference(&sys, &poly, &honest, &cfg).unwrap();
        assert!(check.consistent);
        assert!(check.sampled_boundary_distance.unwrap() > 0.0);

        let mut corrupted = honest.clone();
        corrupted.radius = 3.0;
        let check = certify_reference(&sys, &poly, &corrupted, &cfg).unwrap();
        assert!(!check.consistent);
        assert_eq!(check.sampled_boundary_distance, Some(0.0));

        let zero = lp_feasibility_certificate(&backend, &sys, &poly, 0.0).unwrap();
        let check = certify_reference(&sys, &poly, &zero, &cfg).unwrap();
        assert!(check.consistent);
    }
}
