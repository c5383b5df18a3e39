//! From weak-value scans to reconstructed states, and the fits run on them.

pub mod fit;
pub mod registry;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::state::{gauge_index, wrap_phase, OamState};
use crate::weak::WeakValueScan;
use crate::{Error, Result};

pub use fit::{
    fit_phase_linear_chi2, fit_phase_quadratic, fit_sinc_squared, unwrap_phase, DataPoint, FitResult, ModelKind,
    ParamValue,
};
pub use registry::{FitModel, FitRegistry, FitTarget};

/// Default threshold, relative to the peak density, below which a mode's phase is
/// considered undefined and masked from phase fits.
pub const NULL_FRACTION: f64 = 0.01;

/// Default tolerance (rad) for calling a phase step a π-jump.
pub const PI_JUMP_TOL: f64 = 0.5;

/// A renormalised scan: the state plus per-mode density and phase with errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedState {
    pub state: OamState,
    pub prob: Vec<f64>,
    pub prob_err: Vec<f64>,
    /// Principal value in `(-π, π]`, gauge-fixed.
    pub phase: Vec<f64>,
    pub phase_err: Vec<f64>,
}

impl ReconstructedState {
    pub fn l_max(&self) -> i32 {
        self.state.l_max()
    }

    pub fn ells(&self) -> impl Iterator<Item = i32> {
        -self.l_max()..=self.l_max()
    }

    pub fn density_series(&self) -> Vec<DataPoint> {
        self.ells()
            .zip(self.prob.iter().zip(&self.prob_err))
            .map(|(ell, (&p, &e))| DataPoint::new(ell as f64, p, e))
            .collect()
    }

    pub fn phase_series(&self) -> Vec<DataPoint> {
        self.ells()
            .zip(self.phase.iter().zip(&self.phase_err))
            .map(|(ell, (&p, &e))| DataPoint::new(ell as f64, p, e))
            .collect()
    }

    /// Modes whose density is below `fraction` of the peak.
    pub fn null_modes(&self, fraction: f64) -> BTreeSet<i32> {
        let peak = self.prob.iter().copied().fold(0.0, f64::max);
        self.ells()
            .zip(&self.prob)
            .filter(|(_, &p)| p < fraction * peak)
            .map(|(ell, _)| ell)
            .collect()
    }
}

/// Removes the points whose `x` is listed in `exclude`.
pub fn apply_mask(data: &[DataPoint], exclude: &BTreeSet<i32>) -> Vec<DataPoint> {
    data.iter()
        .filter(|p| !exclude.contains(&(p.x.round() as i32)))
        .copied()
        .collect()
}

/// Drops zero-uncertainty points from a series whose other points carry
/// uncertainties. The gauge mode's phase (and its phase difference) is zero by
/// convention rather than by measurement, so it adds nothing to a weighted fit.
pub fn without_fixed_points(data: &[DataPoint]) -> Vec<DataPoint> {
    if data.iter().all(|p| p.err == 0.0) {
        return data.to_vec();
    }
    data.iter().filter(|p| p.err != 0.0).copied().collect()
}

/// Normalises the scan, fixes the global phase and propagates the per-mode errors
/// to first order.
pub fn renormalize_scan(scan: &WeakValueScan) -> Result<ReconstructedState> {
    let total: f64 = scan.values.iter().map(|w| w.norm_sqr()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::domain("cannot renormalise an all-zero scan"));
    }
    let d = scan.dim();
    let g = gauge_index(&scan.values).expect("nonzero scan");
    let rot = C64::from_polar(1.0 / total.sqrt(), -scan.values[g].arg());
    let state = OamState::from_amplitudes(scan.l_max, scan.values.iter().map(|w| w * rot).collect())?;

    let prob: Vec<f64> = scan.values.iter().map(|w| w.norm_sqr() / total).collect();
    // contribution of mode k to Var|w_k|², per unit of (δ_lk − p_l)²
    let var_mag: Vec<f64> = (0..d)
        .map(|k| {
            let w = scan.values[k];
            4.0 * (w.re * w.re * scan.err_re[k].powi(2) + w.im * w.im * scan.err_im[k].powi(2))
        })
        .collect();
    let prob_err = (0..d)
        .map(|l| {
            let var: f64 = (0..d)
                .map(|k| {
                    let delta = if k == l { 1.0 } else { 0.0 };
                    (delta - prob[l]).powi(2) * var_mag[k]
                })
                .sum();
            var.sqrt() / total
        })
        .collect();

    let arg_err = |k: usize| -> f64 {
        let w = scan.values[k];
        let m2 = w.norm_sqr();
        if m2 == 0.0 {
            return PI;
        }
        let var = (w.re * scan.err_im[k]).powi(2) + (w.im * scan.err_re[k]).powi(2);
        (var.sqrt() / m2).min(PI)
    };
    let phase = state.amplitudes().iter().map(|a| if a.norm_sqr() == 0.0 { 0.0 } else { wrap_phase(a.arg()) }).collect();
    let ref_err = arg_err(g);
    let phase_err = (0..d)
        .map(|k| if k == g { 0.0 } else { arg_err(k).hypot(ref_err).min(PI) })
        .collect();

    Ok(ReconstructedState {
        state,
        prob,
        prob_err,
        phase,
        phase_err,
    })
}

/// `Δφ(ell) = φ_rotated − φ_reference`, wrapped, with errors added in quadrature.
pub fn delta_phase(rotated: &ReconstructedState, reference: &ReconstructedState) -> Result<Vec<DataPoint>> {
    if rotated.state.dim() != reference.state.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.state.dim(),
            found: rotated.state.dim(),
        });
    }
    Ok(rotated
        .ells()
        .enumerate()
        .map(|(i, ell)| {
            DataPoint::new(
                ell as f64,
                wrap_phase(rotated.phase[i] - reference.phase[i]),
                rotated.phase_err[i].hypot(reference.phase_err[i]),
            )
        })
        .collect())
}

/// Modes where the phase jumps by π across a local minimum of the density.
///
/// For each interior mode at a local density minimum, the phases of its two
/// neighbours are compared; a difference within `tol` of π flags the mode.
pub fn detect_pi_jumps(rec: &ReconstructedState, tol: f64) -> BTreeSet<i32> {
    let d = rec.prob.len();
    let mut out = BTreeSet::new();
    for i in 1..d.saturating_sub(1) {
        let is_min = rec.prob[i] <= rec.prob[i - 1] && rec.prob[i] <= rec.prob[i + 1];
        if !is_min || rec.prob[i - 1] == 0.0 || rec.prob[i + 1] == 0.0 {
            continue;
        }
        let step = wrap_phase(rec.phase[i + 1] - rec.phase[i - 1]).abs();
        if (step - PI).abs() <= tol {
            out.insert(i as i32 - rec.l_max());
        }
    }
    out
}
