//! Bus admittance matrix: series elements 1/(r + jx), half line-charging
//! at each end, off-nominal taps and phase shifts on the from side, bus
//! shunts per-unit on the system base.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::parse::MatpowerCase;
use super::MatpowerError;

/// Complex nodal admittance matrix in bus-table order (per-unit).
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn nbus(&self) -> usize {
        self.y.nrows()
    }

    /// Entry in bus-table positions (not bus ids).
    pub fn entry(&self, i: usize, k: usize) -> Complex64 {
        self.y[(i, k)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.y
    }
}

pub fn build_ybus(case: &MatpowerCase) -> Result<AdmittanceMatrix, MatpowerError> {
    let nb = case.buses.len();
    let pos = case.bus_positions();
    let mut y = DMatrix::<Complex64>::zeros(nb, nb);
    for br in case.in_service_branches() {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(MatpowerError::ZeroImpedance { from: br.from, to: br.to });
        }
        let f = pos[&br.from];
        let t = pos[&br.to];
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half_charge = Complex64::new(0.0, br.charging / 2.0);
        let ratio = if br.tap == 0.0 { 1.0 } else { br.tap };
        let tap = Complex64::from_polar(ratio, br.shift_deg.to_radians());
        y[(f, f)] += (ys + half_charge) / (ratio * ratio);
        y[(f, t)] += -ys / tap.conj();
        y[(t, f)] += -ys / tap;
        y[(t, t)] += ys + half_charge;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(bus.gs, bus.bs) / case.base_mva;
    }
    Ok(AdmittanceMatrix { y })
}
