//! Discrete OAM states and the conjugate angular-position basis.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Tolerance used by [`OamState::is_normalized`].
pub const NORM_TOL: f64 = 1e-12;

/// Mode cutoff used throughout when nothing else is configured (d = 27).
pub const DEFAULT_L_MAX: i32 = 13;

/// Pure state over OAM modes `ell` in `[-l_max, l_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OamState {
    l_max: i32,
    amps: Vec<C64>,
}

impl OamState {
    /// Wraps raw amplitudes, ordered by ascending `ell`. No normalisation is applied.
    pub fn from_amplitudes(l_max: i32, amps: Vec<C64>) -> Result<Self> {
        if l_max < 0 {
            return Err(Error::domain(format!("l_max must be >= 0, got {l_max}")));
        }
        let d = dim_for(l_max);
        if amps.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: amps.len(),
            });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::domain("non-finite amplitude"));
        }
        Ok(Self { l_max, amps })
    }

    pub fn from_fn(l_max: i32, mut f: impl FnMut(i32) -> C64) -> Result<Self> {
        let amps = (-l_max..=l_max).map(&mut f).collect();
        Self::from_amplitudes(l_max, amps)
    }

    /// The OAM eigenstate `|ell>`.
    pub fn basis(l_max: i32, ell: i32) -> Result<Self> {
        if ell.abs() > l_max {
            return Err(Error::domain(format!("ell = {ell} outside [-{l_max}, {l_max}]")));
        }
        Self::from_fn(l_max, |l| if l == ell { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Equal-weight superposition; this is the angular basis state at theta = 0.
    pub fn flat(l_max: i32) -> Result<Self> {
        let amp = 1.0 / (dim_for(l_max) as f64).sqrt();
        Self::from_fn(l_max, |_| C64::new(amp, 0.0))
    }

    pub fn l_max(&self) -> i32 {
        self.l_max
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn ells(&self) -> impl Iterator<Item = i32> + '_ {
        -self.l_max..=self.l_max
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// `(ell, a_ell)` pairs in ascending `ell`.
    pub fn iter(&self) -> impl Iterator<Item = (i32, C64)> + '_ {
        self.ells().zip(self.amps.iter().copied())
    }

    pub fn amplitude(&self, ell: i32) -> Option<C64> {
        self.index_of(ell).map(|i| self.amps[i])
    }

    pub fn index_of(&self, ell: i32) -> Option<usize> {
        (ell.abs() <= self.l_max).then(|| (ell + self.l_max) as usize)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() < NORM_TOL
    }

    pub fn normalize(mut self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::domain("cannot normalise the zero vector"));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(self)
    }

    /// Fixes the global phase: `arg(a_0) = 0` when `a_0 != 0`, otherwise the
    /// largest-magnitude component (lowest `ell` on ties) is made real positive.
    pub fn with_gauge(mut self) -> Self {
        if let Some(i) = gauge_index(&self.amps) {
            let ph = self.amps[i].arg();
            let rot = C64::from_polar(1.0, -ph);
            self.amps.iter_mut().for_each(|a| *a *= rot);
        }
        self
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &OamState) -> Result<C64> {
        self.check_dim(other.dim())?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: d,
            });
        }
        Ok(())
    }
}

pub fn dim_for(l_max: i32) -> usize {
    (2 * l_max + 1) as usize
}

/// Index used to fix the global phase of `amps` (centre element if nonzero).
pub(crate) fn gauge_index(amps: &[C64]) -> Option<usize> {
    let centre = amps.len() / 2;
    if amps.get(centre).is_some_and(|a| a.norm_sqr() > 0.0) {
        return Some(centre);
    }
    let (mut best, mut best_mag) = (None, 0.0);
    for (i, a) in amps.iter().enumerate() {
        if a.norm_sqr() > best_mag {
            best = Some(i);
            best_mag = a.norm_sqr();
        }
    }
    best
}

/// Unnormalised sinc, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// State produced by an angular aperture of width `delta_theta`: `a_ell ∝ sinc(Δθ·ell/2)`.
///
/// Nulls at `ell = ±m·2π/Δθ` are returned as exact zeros.
pub fn aperture_state(delta_theta: f64, l_max: i32) -> Result<OamState> {
    if !(delta_theta > 0.0 && delta_theta <= TAU) {
        return Err(Error::domain(format!(
            "aperture width must lie in (0, 2π], got {delta_theta}"
        )));
    }
    if l_max < 1 {
        return Err(Error::domain(format!("l_max must be >= 1, got {l_max}")));
    }
    OamState::from_fn(l_max, |ell| {
        // number of half-periods of sin(x) at this ell
        let cycles = delta_theta * ell as f64 / TAU;
        let on_null = ell != 0 && (cycles - cycles.round()).abs() < 1e-12;
        let a = if on_null { 0.0 } else { sinc(delta_theta * ell as f64 / 2.0) };
        C64::new(a, 0.0)
    })?
    .normalize()
}

/// Rotation about the beam axis by `theta0`: `a_ell -> a_ell · exp(i·ell·theta0)`.
pub fn rotate_state(state: &OamState, theta0: f64) -> OamState {
    let theta = theta0.rem_euclid(TAU);
    let amps = state
        .iter()
        .map(|(ell, a)| a * C64::from_polar(1.0, ell as f64 * theta))
        .collect();
    OamState {
        l_max: state.l_max,
        amps,
    }
}

/// `|<a|b>|²`.
pub fn fidelity(a: &OamState, b: &OamState) -> Result<f64> {
    let ov = a.inner(b)?;
    Ok((ov.norm_sqr() / (a.norm_sqr() * b.norm_sqr())).clamp(0.0, 1.0))
}

/// The d-point angular-position basis `theta_n = 2πn/d`, conjugate to OAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AngularBasis {
    d: usize,
}

impl AngularBasis {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d.is_multiple_of(2) {
            return Err(Error::domain(format!("angular basis needs odd d, got {d}")));
        }
        Ok(Self { d })
    }

    pub fn for_l_max(l_max: i32) -> Self {
        Self { d: dim_for(l_max) }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn l_max(&self) -> i32 {
        ((self.d - 1) / 2) as i32
    }

    pub fn theta(&self, n: usize) -> f64 {
        TAU * n as f64 / self.d as f64
    }

    /// `<theta_n|ell> = exp(-i·ell·theta_n)/√d`.
    pub fn overlap(&self, n: usize, ell: i32) -> C64 {
        // reduce ell·n mod d before scaling to keep the phase argument small
        let k = (ell as i64 * n as i64).rem_euclid(self.d as i64) as f64;
        C64::from_polar(1.0 / (self.d as f64).sqrt(), -TAU * k / self.d as f64)
    }

    /// `<theta_n|Psi>`.
    pub fn angle_overlap(&self, n: usize, state: &OamState) -> Result<C64> {
        self.check(n, state)?;
        Ok(state.iter().map(|(ell, a)| self.overlap(n, ell) * a).sum())
    }

    /// Amplitudes of `state` in the angular basis, `n = 0..d`.
    pub fn to_angle_basis(&self, state: &OamState) -> Result<Vec<C64>> {
        self.check(0, state)?;
        Ok((0..self.d)
            .map(|n| state.iter().map(|(ell, a)| self.overlap(n, ell) * a).sum())
            .collect())
    }

    /// Inverse of [`to_angle_basis`](Self::to_angle_basis).
    pub fn from_angle_basis(&self, coeffs: &[C64]) -> Result<OamState> {
        if coeffs.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: coeffs.len(),
            });
        }
        OamState::from_fn(self.l_max(), |ell| {
            coeffs
                .iter()
                .enumerate()
                .map(|(n, c)| self.overlap(n, ell).conj() * c)
                .sum()
        })
    }

    fn check(&self, n: usize, state: &OamState) -> Result<()> {
        if state.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: state.dim(),
            });
        }
        if n >= self.d {
            return Err(Error::domain(format!("theta index {n} outside [0, {})", self.d)));
        }
        Ok(())
    }
}

/// Principal value of an angle in `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sinc_state() -> OamState {
        aperture_state(TAU / 9.0, 13).unwrap()
    }

    #[test]
    fn aperture_first_null_is_exact() {
        let s = sinc_state();
        assert_eq!(s.amplitude(9).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(s.amplitude(-9).unwrap(), C64::new(0.0, 0.0));
        assert!(s.is_normalized());
        assert!(s.amplitudes().iter().all(|a| a.im == 0.0));
    }

    #[test]
    fn full_aperture_passes_only_ell_zero() {
        let s = aperture_state(TAU, 13).unwrap();
        for (ell, a) in s.iter() {
            let expect = if ell == 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(a.re, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn aperture_amplitude_ratio() {
        let s = sinc_state();
        // sin(4π/9)/(4π/9), evaluated directly
        let x = 4.0 * PI / 9.0;
        let ratio = s.amplitude(4).unwrap().re / s.amplitude(0).unwrap().re;
        assert_abs_diff_eq!(ratio, x.sin() / x, epsilon = 1e-14);
        assert_abs_diff_eq!(ratio, 0.705_316_4, epsilon = 1e-6);
    }

    #[test]
    fn aperture_rejects_bad_width() {
        assert!(aperture_state(0.0, 13).is_err());
        assert!(aperture_state(-1.0, 13).is_err());
        assert!(aperture_state(TAU + 1e-9, 13).is_err());
        assert!(aperture_state(1.0, 0).is_err());
    }

    #[test]
    fn aperture_nulls_for_integer_widths() {
        for m in 2..=13 {
            let s = aperture_state(TAU / m as f64, 13).unwrap();
            assert_eq!(s.amplitude(m).unwrap().norm(), 0.0, "m = {m}");
            assert_eq!(s.amplitude(-m).unwrap().norm(), 0.0, "m = {m}");
        }
    }

    #[test]
    fn rotation_identity_and_phase_slope() {
        let s = sinc_state();
        assert_eq!(rotate_state(&s, 0.0), s);

        let r = rotate_state(&s, PI / 9.0);
        for ell in -13..13 {
            let (a, b) = (s.amplitude(ell).unwrap(), s.amplitude(ell + 1).unwrap());
            if a.re * b.re > 0.0 {
                let step = wrap_phase(r.amplitude(ell + 1).unwrap().arg() - r.amplitude(ell).unwrap().arg());
                assert_abs_diff_eq!(step, PI / 9.0, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(PI / 9.0, 0.3491, epsilon = 1e-4);
    }

    #[test]
    fn rotating_a_basis_state_is_a_global_phase() {
        let s = OamState::basis(13, 3).unwrap();
        let r = rotate_state(&s, PI / 2.0);
        let a = r.amplitude(3).unwrap();
        assert_abs_diff_eq!(a.re, (1.5 * PI).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(a.im, (1.5 * PI).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&s, &r).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn flat_state_is_theta_zero() {
        let basis = AngularBasis::for_l_max(13);
        let ov = basis.angle_overlap(0, &OamState::flat(13).unwrap()).unwrap();
        assert_abs_diff_eq!(ov.re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ov.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mutual_unbiasedness() {
        let basis = AngularBasis::new(27).unwrap();
        for n in 0..27 {
            for ell in -13..=13 {
                let s = OamState::basis(13, ell).unwrap();
                let m = basis.angle_overlap(n, &s).unwrap().norm();
                assert!((m - 1.0 / 27f64.sqrt()).abs() < 1e-12);
            }
        }
        assert_abs_diff_eq!(1.0 / 27f64.sqrt(), 0.19245, epsilon = 1e-5);
    }

    #[test]
    fn angle_transform_is_unitary() {
        let basis = AngularBasis::for_l_max(13);
        let coeffs = basis.to_angle_basis(&sinc_state()).unwrap();
        let total: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let basis = AngularBasis::new(27).unwrap();
        let small = OamState::basis(3, 0).unwrap();
        assert!(matches!(
            basis.angle_overlap(0, &small),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fidelity(&small, &sinc_state()).is_err());
        assert!(AngularBasis::new(4).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let s = sinc_state();
        assert_abs_diff_eq!(fidelity(&s, &s).unwrap(), 1.0, epsilon = 1e-15);
        let (b0, b1) = (OamState::basis(13, 0).unwrap(), OamState::basis(13, 1).unwrap());
        assert_eq!(fidelity(&b0, &b1).unwrap(), 0.0);

        // brute-force |Σ |a|² e^{iℓπ/9}|²
        let mut acc = C64::new(0.0, 0.0);
        for ell in -13..=13 {
            let a = s.amplitude(ell).unwrap();
            acc += a.norm_sqr() * C64::from_polar(1.0, ell as f64 * PI / 9.0);
        }
        let f = fidelity(&s, &rotate_state(&s, PI / 9.0)).unwrap();
        assert_abs_diff_eq!(f, acc.norm_sqr(), epsilon = 1e-14);
        assert!(f < 1.0);
    }

    #[test]
    fn gauge_uses_largest_component_when_centre_vanishes() {
        let s = OamState::from_fn(2, |ell| match ell {
            -1 => C64::new(0.0, 0.3),
            2 => C64::new(0.0, -0.9),
            _ => C64::new(0.0, 0.0),
        })
        .unwrap()
        .with_gauge();
        let a = s.amplitude(2).unwrap();
        assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        assert!(a.re > 0.0);
    }

    fn arb_state() -> impl Strategy<Value = OamState> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 27).prop_filter_map("zero", |v| {
            let amps = v.into_iter().map(|(r, i)| C64::new(r, i)).collect();
            OamState::from_amplitudes(13, amps).ok()?.normalize().ok()
        })
    }

    proptest! {
        #[test]
        fn normalization_holds(s in arb_state()) {
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotations_compose(s in arb_state(), x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let lhs = rotate_state(&rotate_state(&s, x), y);
            let rhs = rotate_state(&s, x + y);
            for (a, b) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            for (a, b) in lhs.amplitudes().iter().zip(s.amplitudes()) {
                prop_assert!((a.norm() - b.norm()).abs() < 1e-15);
            }
        }

        #[test]
        fn angle_basis_round_trip(s in arb_state()) {
            let basis = AngularBasis::for_l_max(13);
            let back = basis.from_angle_basis(&basis.to_angle_basis(&s).unwrap()).unwrap();
            for (a, b) in back.amplitudes().iter().zip(s.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }

        #[test]
        fn fidelity_symmetric_and_phase_blind(a in arb_state(), b in arb_state(), chi in -3.0f64..3.0) {
            let fab = fidelity(&a, &b).unwrap();
            prop_assert!((fab - fidelity(&b, &a).unwrap()).abs() < 1e-14);
            prop_assert!((0.0..=1.0).contains(&fab));
            let shifted = OamState::from_amplitudes(
                13,
                a.amplitudes().iter().map(|x| x * C64::from_polar(1.0, chi)).collect(),
            ).unwrap();
            prop_assert!((fidelity(&a, &shifted).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
