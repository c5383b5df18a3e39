//! Least-squares fits used on reconstructed states.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::state::sinc;
use crate::{Error, Result};

/// One sample `y(x) ± err`; `err == 0` means "no uncertainty supplied".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub err: f64,
}

impl DataPoint {
    pub fn new(x: f64, y: f64, err: f64) -> Self {
        Self { x, y, err }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "sinc-squared")]
    SincSquared,
    #[serde(rename = "quadratic-phase")]
    QuadraticPhase,
    #[serde(rename = "linear-phase")]
    LinearPhase,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SincSquared => "sinc-squared",
            ModelKind::QuadraticPhase => "quadratic-phase",
            ModelKind::LinearPhase => "linear-phase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub value: f64,
    pub err: f64,
}

/// Fitted parameters with 1-σ uncertainties from the covariance at the minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub params: BTreeMap<String, ParamValue>,
    pub chi2: f64,
    pub dof: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<ParamValue> {
        self.params.get(name).copied()
    }

    fn value(&self, name: &str) -> f64 {
        self.params.get(name).map_or(0.0, |p| p.value)
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            0.0
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Evaluates the fitted model at `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        match self.model {
            ModelKind::SincSquared => sinc_sq_model(self.value("amplitude"), self.value("width"), x),
            ModelKind::QuadraticPhase => self.value("a") * x * x + self.value("b") * x + self.value("c"),
            ModelKind::LinearPhase => self.value("slope") * x + self.value("intercept"),
        }
    }
}

fn sinc_sq_model(amplitude: f64, width: f64, x: f64) -> f64 {
    amplitude * sinc(PI * x / width).powi(2)
}

/// Weights `1/err²` when every point carries an uncertainty, otherwise `None`.
fn weights(data: &[DataPoint]) -> Option<Vec<f64>> {
    data.iter()
        .all(|p| p.err > 0.0 && p.err.is_finite())
        .then(|| data.iter().map(|p| 1.0 / (p.err * p.err)).collect())
}

fn check_finite(data: &[DataPoint]) -> Result<()> {
    match data.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
        Some(p) => Err(Error::domain(format!("non-finite sample at x = {}", p.x))),
        None => Ok(()),
    }
}

const WIDTH_GRID_STEP: f64 = 0.01;
const GOLDEN_MAX_ITER: usize = 200;

/// Fits `A·sinc²(πx/Δ)` over `(A, Δ)` with `Δ ∈ [1, 4·max|x|]`.
///
/// `A` is solved in closed form for every trial `Δ`; the width itself is found by a
/// bounded grid scan refined with golden-section search, both seeded from the
/// first empirical null.
pub fn fit_sinc_squared(data: &[DataPoint]) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(Error::domain(format!("sinc² fit needs >= 5 points, got {}", data.len())));
    }
    check_finite(data)?;
    let w = weights(data);
    let wt = |i: usize| w.as_ref().map_or(1.0, |w| w[i]);

    let profile = |width: f64| -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, p) in data.iter().enumerate() {
            let g = sinc(PI * p.x / width).powi(2);
            num += wt(i) * p.y * g;
            den += wt(i) * g * g;
        }
        let amp = if den > 0.0 { num / den } else { 0.0 };
        let chi2 = data
            .iter()
            .enumerate()
            .map(|(i, p)| wt(i) * (p.y - sinc_sq_model(amp, width, p.x)).powi(2))
            .sum();
        (amp, chi2)
    };

    let x_max = data.iter().map(|p| p.x.abs()).fold(0.0, f64::max);
    let (lo, hi) = (1.0, (4.0 * x_max).max(1.0 + WIDTH_GRID_STEP));

    let mut seeds = Vec::new();
    let steps = ((hi - lo) / WIDTH_GRID_STEP).round() as usize;
    let grid: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let width = (lo + k as f64 * WIDTH_GRID_STEP).min(hi);
            (width, profile(width).1)
        })
        .collect();
    // strict '<' keeps the smallest width on ties
    let best = grid
        .iter()
        .copied()
        .fold((lo, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    seeds.push(best.0);
    if let Some(guess) = first_null(data) {
        if guess > lo && guess < hi {
            seeds.push(guess);
        }
    }

    let mut result: Option<(f64, f64)> = None;
    for seed in seeds {
        let a = (seed - WIDTH_GRID_STEP).max(lo);
        let b = (seed + WIDTH_GRID_STEP).min(hi);
        let (width, iters) = golden_section(|x| profile(x).1, a, b, 1e-12);
        let chi2 = profile(width).1;
        if !chi2.is_finite() || iters >= GOLDEN_MAX_ITER {
            return Err(Error::FitFailure {
                model: ModelKind::SincSquared.name().into(),
                iterations: iters,
                last: vec![width],
            });
        }
        let better = match result {
            None => true,
            Some((w0, c0)) => chi2 < c0 - 1e-12 * c0.abs() || (chi2 <= c0 + 1e-12 * c0.abs() && width < w0),
        };
        if better {
            result = Some((width, chi2));
        }
    }
    let (width, chi2) = result.expect("at least one seed");
    if width <= lo + 1e-9 || width >= hi - 1e-9 {
        return Err(Error::FitFailure {
            model: ModelKind::SincSquared.name().into(),
            iterations: steps,
            last: vec![width],
        });
    }
    let (amp, _) = profile(width);

    // Jacobian columns: ∂/∂A and ∂/∂Δ
    let n = data.len();
    let mut jac = DMatrix::<f64>::zeros(n, 2);
    for (i, p) in data.iter().enumerate() {
        let u = PI * p.x / width;
        let s = sinc(u);
        jac[(i, 0)] = s * s;
        jac[(i, 1)] = if u == 0.0 {
            0.0
        } else {
            -2.0 * amp * s * (u.cos() - s) / width
        };
    }
    let dof = n - 2;
    let cov = covariance(&jac, &(0..n).map(wt).collect::<Vec<_>>(), chi2, dof, true)?;

    Ok(FitResult {
        model: ModelKind::SincSquared,
        params: BTreeMap::from([
            ("amplitude".to_string(), ParamValue { value: amp, err: cov[(0, 0)].max(0.0).sqrt() }),
            ("width".to_string(), ParamValue { value: width, err: cov[(1, 1)].max(0.0).sqrt() }),
        ]),
        chi2,
        dof,
    })
}

/// Position of the first local minimum of `y` moving outward from the peak,
/// averaged over both sides when present.
fn first_null(data: &[DataPoint]) -> Option<f64> {
    let mut pts = data.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    let peak = (0..pts.len()).max_by(|&i, &j| pts[i].y.total_cmp(&pts[j].y))?;
    let mut found = Vec::new();
    // right side
    for i in peak + 1..pts.len().saturating_sub(1) {
        if pts[i].y <= pts[i - 1].y && pts[i].y <= pts[i + 1].y {
            found.push((pts[i].x - pts[peak].x).abs());
            break;
        }
    }
    for i in (1..peak).rev() {
        if pts[i].y <= pts[i - 1].y && pts[i].y <= pts[i + 1].y {
            found.push((pts[i].x - pts[peak].x).abs());
            break;
        }
    }
    (!found.is_empty()).then(|| found.iter().sum::<f64>() / found.len() as f64)
}

/// Golden-section minimisation on `[a, b]`; returns the abscissa and iterations used.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, usize) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iters = 0;
    while (b - a).abs() > tol && iters < GOLDEN_MAX_ITER {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let x = if fc <= fd { c } else { d };
    (x, iters)
}

/// `(JᵀWJ)⁻¹`, scaled by `chi2/dof` when `scaled` is set.
fn covariance(jac: &DMatrix<f64>, w: &[f64], chi2: f64, dof: usize, scaled: bool) -> Result<DMatrix<f64>> {
    let mut jw = jac.clone();
    for (i, wi) in w.iter().enumerate() {
        jw.row_mut(i).scale_mut(*wi);
    }
    let info = jac.transpose() * jw;
    let inv = info
        .try_inverse()
        .ok_or_else(|| Error::domain("singular normal matrix: parameters are not identifiable"))?;
    let factor = if scaled && dof > 0 { chi2 / dof as f64 } else { 1.0 };
    Ok(inv * factor)
}

struct PolyFit {
    coeffs: Vec<f64>,
    errs: Vec<f64>,
    chi2: f64,
    dof: usize,
}

/// Weighted polynomial least squares, coefficients in ascending power.
///
/// With uncertainties on every point the covariance is `(AᵀWA)⁻¹`. Without any
/// uncertainties the fit is unweighted and the covariance is scaled by the residual
/// variance. Mixing zero and nonzero uncertainties falls back to the unweighted fit
/// and requires the zero-uncertainty points to lie on the curve.
fn poly_fit(data: &[DataPoint], degree: usize) -> Result<PolyFit> {
    check_finite(data)?;
    let k = degree + 1;
    if data.len() < k {
        return Err(Error::domain(format!(
            "polynomial of degree {degree} needs >= {k} points, got {}",
            data.len()
        )));
    }
    let w = weights(data);
    let wv: Vec<f64> = w.clone().unwrap_or_else(|| vec![1.0; data.len()]);
    let n = data.len();
    let design = DMatrix::from_fn(n, k, |i, j| data[i].x.powi(j as i32));
    let mut lhs = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for i in 0..n {
        for a in 0..k {
            rhs[a] += wv[i] * design[(i, a)] * data[i].y;
            for b in 0..k {
                lhs[(a, b)] += wv[i] * design[(i, a)] * design[(i, b)];
            }
        }
    }
    let inv = lhs
        .try_inverse()
        .ok_or_else(|| Error::domain("singular normal matrix: abscissae do not determine the polynomial"))?;
    let coeffs = &inv * rhs;
    let resid: Vec<f64> = (0..n)
        .map(|i| data[i].y - (0..k).map(|j| coeffs[j] * design[(i, j)]).sum::<f64>())
        .collect();
    let chi2: f64 = resid.iter().zip(&wv).map(|(r, w)| w * r * r).sum();
    let dof = n - k;

    // a zero uncertainty next to finite ones acts as an infinite weight
    let mixed = w.is_none() && data.iter().any(|p| p.err > 0.0);
    if mixed {
        if let Some((p, _)) = data
            .iter()
            .zip(&resid)
            .find(|(p, r)| p.err == 0.0 && r.abs() > 1e-9 * (1.0 + p.y.abs()))
        {
            return Err(Error::DegenerateWeights { x: p.x });
        }
    }
    let factor = if w.is_none() && dof > 0 { chi2 / dof as f64 } else if w.is_none() { 0.0 } else { 1.0 };
    let errs = (0..k).map(|j| (inv[(j, j)] * factor).max(0.0).sqrt()).collect();
    Ok(PolyFit {
        coeffs: coeffs.iter().copied().collect(),
        errs,
        chi2,
        dof,
    })
}

/// Unwraps a phase sequence along `x` with the given period (π removes sign flips
/// as well as 2π wraps). The point nearest `x = 0` keeps its principal value.
pub fn unwrap_phase(data: &[DataPoint], period: f64) -> Vec<DataPoint> {
    let mut pts = data.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    let Some(anchor) = (0..pts.len()).min_by(|&i, &j| pts[i].x.abs().total_cmp(&pts[j].x.abs())) else {
        return pts;
    };
    let step = |prev: f64, cur: f64| {
        let d = cur - prev;
        prev + (d - period * (d / period).round())
    };
    for i in anchor + 1..pts.len() {
        pts[i].y = step(pts[i - 1].y, pts[i].y);
    }
    for i in (0..anchor).rev() {
        pts[i].y = step(pts[i + 1].y, pts[i].y);
    }
    pts
}

/// Quadratic phase model `a·x² + b·x + c` fitted to the sign-corrected phase.
pub fn fit_phase_quadratic(phase: &[DataPoint]) -> Result<FitResult> {
    if phase.len() < 4 {
        return Err(Error::domain(format!(
            "quadratic phase fit needs >= 4 unmasked points, got {}",
            phase.len()
        )));
    }
    let fit = poly_fit(&unwrap_phase(phase, PI), 2)?;
    let p = |j: usize| ParamValue {
        value: fit.coeffs[j],
        err: fit.errs[j],
    };
    Ok(FitResult {
        model: ModelKind::QuadraticPhase,
        params: BTreeMap::from([("a".into(), p(2)), ("b".into(), p(1)), ("c".into(), p(0))]),
        chi2: fit.chi2,
        dof: fit.dof,
    })
}

/// Linear phase model `m·x + c` by chi-square minimisation.
pub fn fit_phase_linear_chi2(delta_phase: &[DataPoint]) -> Result<FitResult> {
    if delta_phase.len() < 4 {
        return Err(Error::domain(format!(
            "linear phase fit needs >= 4 unmasked points, got {}",
            delta_phase.len()
        )));
    }
    let fit = poly_fit(&unwrap_phase(delta_phase, TAU), 1)?;
    let p = |j: usize| ParamValue {
        value: fit.coeffs[j],
        err: fit.errs[j],
    };
    Ok(FitResult {
        model: ModelKind::LinearPhase,
        params: BTreeMap::from([("intercept".into(), p(0)), ("slope".into(), p(1))]),
        chi2: fit.chi2,
        dof: fit.dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::wrap_phase;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ells() -> impl Iterator<Item = f64> {
        (-13..=13).map(f64::from)
    }

    fn sinc_sq_data(width: f64) -> Vec<DataPoint> {
        ells().map(|x| DataPoint::new(x, sinc(PI * x / width).powi(2), 0.0)).collect()
    }

    #[test]
    fn sinc_fit_recovers_its_own_model() {
        let fit = fit_sinc_squared(&sinc_sq_data(9.0)).unwrap();
        let w = fit.param("width").unwrap();
        assert_abs_diff_eq!(w.value, 9.0, epsilon = 1e-6);
        assert!(w.err < 1e-6);
        assert!(fit.chi2 < 1e-10);
        assert_eq!(fit.dof, 25);
    }

    #[test]
    fn sinc_fit_is_idempotent() {
        let data: Vec<DataPoint> = ells()
            .map(|x| DataPoint::new(x, 0.3 * sinc(PI * x / 6.3).powi(2) + 0.002 * (x * 1.7).sin(), 0.01))
            .collect();
        let fit = fit_sinc_squared(&data).unwrap();
        let regen: Vec<DataPoint> = data.iter().map(|p| DataPoint::new(p.x, fit.evaluate(p.x), p.err)).collect();
        let refit = fit_sinc_squared(&regen).unwrap();
        for name in ["amplitude", "width"] {
            assert_abs_diff_eq!(fit.param(name).unwrap().value, refit.param(name).unwrap().value, epsilon = 1e-8);
        }
    }

    #[test]
    fn sinc_fit_needs_five_points() {
        let data = sinc_sq_data(9.0)[..4].to_vec();
        assert!(matches!(fit_sinc_squared(&data), Err(Error::Domain(_))));
    }

    #[test]
    fn sinc_fit_fails_without_an_interior_minimum() {
        // a monotonic ramp is best described by the widest allowed sinc
        let data: Vec<DataPoint> = ells().map(|x| DataPoint::new(x, 1.0 + 0.0 * x, 0.0)).collect();
        assert!(matches!(fit_sinc_squared(&data), Err(Error::FitFailure { .. })));
    }

    #[test]
    fn flat_phase_gives_zero_quadratic() {
        let data: Vec<DataPoint> = ells().map(|x| DataPoint::new(x, 0.0, 0.0)).collect();
        let fit = fit_phase_quadratic(&data).unwrap();
        for name in ["a", "b", "c"] {
            let p = fit.param(name).unwrap();
            assert_abs_diff_eq!(p.value, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratic_recovers_injected_defocus_and_tilt() {
        let truth = |x: f64| 0.01 * x * x + 0.05 * x;
        let exact: Vec<DataPoint> = ells().map(|x| DataPoint::new(x, wrap_phase(truth(x)), 0.0)).collect();
        let fit = fit_phase_quadratic(&exact).unwrap();
        for (name, v) in [("a", 0.01), ("b", 0.05), ("c", 0.0)] {
            let p = fit.param(name).unwrap();
            assert!((p.value - v).abs() <= p.err.max(1e-9), "{name}: {p:?}");
        }

        // noisy version: within 3σ on a fixed seed
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let noisy: Vec<DataPoint> = ells()
            .map(|x| DataPoint::new(x, truth(x) + noise.sample(&mut rng), 0.02))
            .collect();
        let fit = fit_phase_quadratic(&noisy).unwrap();
        for (name, v) in [("a", 0.01), ("b", 0.05), ("c", 0.0)] {
            let p = fit.param(name).unwrap();
            assert!((p.value - v).abs() <= 3.0 * p.err, "{name}: {p:?}");
        }
    }

    #[test]
    fn quadratic_removes_pi_jumps() {
        // sinc sign pattern: phase π beyond |ℓ| = 9
        let data: Vec<DataPoint> = ells()
            .filter(|x| x.abs() != 9.0)
            .map(|x| DataPoint::new(x, if x.abs() > 9.0 { PI } else { 0.0 } + 0.002 * x * x, 0.0))
            .collect();
        let fit = fit_phase_quadratic(&data).unwrap();
        assert_abs_diff_eq!(fit.param("a").unwrap().value, 0.002, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.param("c").unwrap().value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_slope_of_exact_rotation() {
        let data: Vec<DataPoint> = ells().map(|x| DataPoint::new(x, wrap_phase(PI * x / 9.0), 0.0)).collect();
        let fit = fit_phase_linear_chi2(&data).unwrap();
        let m = fit.param("slope").unwrap();
        assert_abs_diff_eq!(m.value, 0.3491, epsilon = 1e-4);
        assert_abs_diff_eq!(m.value, PI / 9.0, epsilon = 1e-12);
        assert!(m.err < 1e-10);
        assert_abs_diff_eq!(fit.param("intercept").unwrap().value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_slope_with_noise_over_seeds() {
        let mut slopes = Vec::new();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let data: Vec<DataPoint> = ells()
                .map(|x| DataPoint::new(x, wrap_phase(-PI * x / 9.0 + noise.sample(&mut rng)), 0.05))
                .collect();
            let fit = fit_phase_linear_chi2(&data).unwrap();
            let m = fit.param("slope").unwrap();
            // analytic σ_m = 0.05/√Σx², Σx² = 2·(1²+…+13²) = 1638
            assert_abs_diff_eq!(m.err, 0.05 / 1638f64.sqrt(), epsilon = 1e-12);
            slopes.push(m.value);
        }
        let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
        let sd = (slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt();
        assert_abs_diff_eq!(mean, -0.349, epsilon = 0.002);
        assert!(sd < 0.01, "scatter {sd}");
    }

    #[test]
    fn constant_phase_has_no_slope() {
        let data: Vec<DataPoint> = ells().map(|x| DataPoint::new(x, 0.4, 0.1)).collect();
        let fit = fit_phase_linear_chi2(&data).unwrap();
        let m = fit.param("slope").unwrap();
        assert!(m.value.abs() <= m.err);
    }

    #[test]
    fn zero_weight_inconsistency_is_rejected() {
        let mut data: Vec<DataPoint> = ells().map(|x| DataPoint::new(x, 0.1 * x, 0.05)).collect();
        data[5].err = 0.0;
        data[5].y += 0.3;
        assert!(matches!(fit_phase_linear_chi2(&data), Err(Error::DegenerateWeights { .. })));
        data[5].y = 0.1 * data[5].x;
        assert!(fit_phase_linear_chi2(&data).is_ok());
        // without any uncertainties the same data is an ordinary least-squares problem
        let plain: Vec<DataPoint> = data.iter().map(|p| DataPoint::new(p.x, p.y + 0.01 * p.x.sin(), 0.0)).collect();
        assert!(fit_phase_linear_chi2(&plain).is_ok());
    }

    #[test]
    fn underdetermined_phase_fits() {
        let data: Vec<DataPoint> = (0..3).map(|x| DataPoint::new(x as f64, 0.0, 0.1)).collect();
        assert!(fit_phase_quadratic(&data).is_err());
        assert!(fit_phase_linear_chi2(&data).is_err());
    }
}
