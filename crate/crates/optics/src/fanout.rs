//! Continuous-phase fan-out gratings.
//!
//! Profiles are even cosine series over one period, `phi(x) = Σ_k c_k cos(k x)`
//! with `k = 1..=K`. Order amplitudes follow from the Jacobi–Anger expansion
//! `exp(i c cos x) = Σ_n i^n J_n(c) e^{inx}`, combined across harmonics.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum acceptable share of power in the target orders.
pub const MIN_EFFICIENCY: f64 = 0.90;

/// Bessel orders kept per harmonic beyond `|c|`.
const BESSEL_MARGIN: i32 = 18;

const MAX_COEFF: f64 = 6.0;

/// `J_n(x)` for integer `n` from its power series.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let h2 = half * half;
    for k in 1..200 {
        term *= -h2 / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn i_pow(n: i32) -> C64 {
    match n.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Grating with `copies` target orders centred on zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoutSpec {
    pub copies: usize,
    /// Grating period in meters.
    pub period: f64,
    /// `c_k` multiplying `cos(k·2πx/period)`, starting at `k = 1`.
    pub phase_coeffs: Vec<f64>,
}

impl FanoutSpec {
    pub fn new(copies: usize, period: f64, phase_coeffs: Vec<f64>) -> Result<Self> {
        if copies == 0 || copies.is_multiple_of(2) {
            return Err(Error::domain(format!("copies must be odd, got {copies}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::domain(format!("period must be positive, got {period}")));
        }
        if phase_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("phase coefficients must be finite"));
        }
        Ok(Self {
            copies,
            period,
            phase_coeffs,
        })
    }

    pub fn target_orders(&self) -> std::ops::RangeInclusive<i32> {
        let h = (self.copies / 2) as i32;
        -h..=h
    }

    /// Phase at fractional position `t` of a period.
    pub fn phase_at(&self, t: f64) -> f64 {
        let x = 2.0 * PI * t;
        self.phase_coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * x).cos())
            .sum()
    }

    pub fn order_amplitude(&self, m: i32) -> C64 {
        order_amplitude(&self.phase_coeffs, m)
    }

    pub fn order_powers(&self) -> Vec<f64> {
        self.target_orders().map(|m| self.order_amplitude(m).norm_sqr()).collect()
    }

    pub fn efficiency(&self) -> f64 {
        self.order_powers().iter().sum()
    }

    pub fn uniformity(&self) -> f64 {
        uniformity(&self.order_powers())
    }
}

/// `(max - min)/(max + min)` of the order powers.
pub fn uniformity(powers: &[f64]) -> f64 {
    let max = powers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = powers.iter().cloned().fold(f64::INFINITY, f64::min);
    if max + min <= 0.0 {
        return 1.0;
    }
    (max - min) / (max + min)
}

/// Amplitude of diffraction order `m` for the cosine series `coeffs`.
pub fn order_amplitude(coeffs: &[f64], m: i32) -> C64 {
    // all harmonics but the last are expanded into a dense sequence; the last
    // one is matched to the remaining order
    let Some((&last, rest)) = coeffs.split_last() else {
        return if m == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
    };
    let mut seq: Vec<C64> = vec![C64::new(1.0, 0.0)];
    let mut offset: i32 = 0;
    for (k, &c) in rest.iter().enumerate() {
        let h = (k + 1) as i32;
        let nmax = c.abs().ceil() as i32 + BESSEL_MARGIN;
        let new_offset = offset + nmax * h;
        let mut next = vec![C64::new(0.0, 0.0); seq.len() + 2 * (nmax * h) as usize];
        for n in -nmax..=nmax {
            let w = i_pow(n) * bessel_j(n, c);
            if w.norm() < 1e-18 {
                continue;
            }
            for (i, s) in seq.iter().enumerate() {
                let order = i as i32 - offset + n * h;
                next[(order + new_offset) as usize] += s * w;
            }
        }
        seq = next;
        offset = new_offset;
    }
    let h = coeffs.len() as i32;
    let nmax = last.abs().ceil() as i32 + BESSEL_MARGIN;
    let mut out = C64::new(0.0, 0.0);
    for n in -nmax..=nmax {
        let idx = m - n * h + offset;
        if idx >= 0 && (idx as usize) < seq.len() {
            out += seq[idx as usize] * i_pow(n) * bessel_j(n, last);
        }
    }
    out
}

/// Order amplitudes from an FFT of the sampled transmission `exp(i·phi)`.
pub fn far_field_orders(spec: &FanoutSpec, samples: usize, orders: &[i32]) -> Vec<C64> {
    let mut buf: Vec<C64> = (0..samples)
        .map(|j| C64::from_polar(1.0, spec.phase_at(j as f64 / samples as f64)))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(samples).process(&mut buf);
    orders
        .iter()
        .map(|&m| buf[m.rem_euclid(samples as i32) as usize] / samples as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoutDesign {
    pub spec: FanoutSpec,
    pub efficiency: f64,
    pub uniformity: f64,
    pub order_powers: Vec<f64>,
    /// Set when the best profile found misses the uniformity tolerance or
    /// [`MIN_EFFICIENCY`].
    pub below_target: bool,
}

/// Optimises a `copies`-way splitter with `copies` cosine harmonics, maximising
/// the power in the target orders subject to `uniformity <= uniformity_tol`.
pub fn design_fanout(copies: usize, uniformity_tol: f64, period: f64) -> Result<FanoutDesign> {
    if !(uniformity_tol > 0.0 && uniformity_tol < 1.0) {
        return Err(Error::domain(format!("uniformity tolerance must lie in (0, 1), got {uniformity_tol}")));
    }
    let probe = FanoutSpec::new(copies, period, vec![])?;
    if copies == 1 {
        return Ok(summarize(probe, uniformity_tol));
    }

    let objective = |c: &[f64]| -> f64 {
        if c.iter().any(|v| v.abs() > MAX_COEFF) {
            return 10.0;
        }
        let h = (copies / 2) as i32;
        let p: Vec<f64> = (-h..=h).map(|m| order_amplitude(c, m).norm_sqr()).collect();
        let eff: f64 = p.iter().sum();
        -eff + 10.0 * (uniformity(&p) - uniformity_tol).max(0.0)
    };

    let k = copies;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for c1 in [0.8, 1.2, 1.6, 2.2] {
        for sign in [-1.0, 1.0] {
            let mut start = vec![0.0; k];
            start[0] = c1;
            for (i, s) in start.iter_mut().enumerate().skip(1) {
                *s = sign * 0.2 / i as f64;
            }
            let (x, fx) = nelder_mead(&objective, &start, 0.3, 4000, 1e-13);
            if best.as_ref().is_none_or(|(_, b)| fx < *b) {
                best = Some((x, fx));
            }
        }
    }
    let (coeffs, _) = best.expect("at least one start");
    Ok(summarize(FanoutSpec::new(copies, period, coeffs)?, uniformity_tol))
}

fn summarize(spec: FanoutSpec, tol: f64) -> FanoutDesign {
    let order_powers = spec.order_powers();
    let efficiency = order_powers.iter().sum();
    let uniformity = uniformity(&order_powers);
    FanoutDesign {
        below_target: uniformity > tol + 1e-9 || efficiency < MIN_EFFICIENCY,
        spec,
        efficiency,
        uniformity,
        order_powers,
    }
}

/// Downhill simplex minimisation from `start` with initial edge `step`.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64, max_iter: usize, ftol: f64) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= ftol * (1.0 + values[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
        let toward = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };

        let reflected = toward(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] { toward(-0.5) } else { toward(0.5) };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let i = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[i].clone(), values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// `J_n(x) = (1/π)∫_0^π cos(nτ - x sin τ) dτ` by the trapezoid rule.
    fn bessel_integral(n: i32, x: f64) -> f64 {
        let m = 2000;
        let h = PI / m as f64;
        let g = |t: f64| (n as f64 * t - x * t.sin()).cos();
        let inner: f64 = (1..m).map(|j| g(j as f64 * h)).sum();
        (inner + 0.5 * (g(0.0) + g(PI))) * h / PI
    }

    #[test]
    fn bessel_matches_integral_form() {
        for n in -6..=6 {
            for x in [0.0, 0.3, 1.0, 1.4347, 2.5, 4.0, 6.5] {
                assert_abs_diff_eq!(bessel_j(n, x), bessel_integral(n, x), epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(bessel_j(0, 2.404825557695773), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn single_copy_is_flat_and_lossless() {
        let d = design_fanout(1, 0.01, 1e-4).unwrap();
        assert!(d.spec.phase_coeffs.is_empty());
        assert_eq!(d.efficiency, 1.0);
        assert!(!d.below_target);
    }

    #[test]
    fn copies_must_be_odd() {
        assert!(FanoutSpec::new(2, 1e-4, vec![]).is_err());
        assert!(design_fanout(4, 0.01, 1e-4).is_err());
        assert!(design_fanout(3, 0.0, 1e-4).is_err());
    }

    #[test]
    fn pure_cosine_splitter() {
        // J0(c)² = J1(c)² at c ≈ 1.4347 splits into three equal orders
        let spec = FanoutSpec::new(3, 1e-4, vec![1.434_695_650_819]).unwrap();
        let p = spec.order_powers();
        assert_abs_diff_eq!(p[0], p[1], epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], p[2], epsilon = 1e-9);
        assert_abs_diff_eq!(spec.efficiency(), 0.900_736, epsilon = 1e-6);
    }

    /// Best efficiency of `c1 cos x + c3 cos 3x` over a dense grid, at 1% uniformity.
    fn brute_force_two_term() -> f64 {
        let mut best = 0.0f64;
        for i in 0..=300 {
            let c1 = 0.9 + 0.003 * i as f64;
            for j in 0..=300 {
                let c3 = -0.6 + 0.004 * j as f64;
                let spec = FanoutSpec::new(3, 1.0, vec![c1, 0.0, c3]).unwrap();
                let p = far_field_orders(&spec, 256, &[-1, 0, 1]).iter().map(|a| a.norm_sqr()).collect::<Vec<_>>();
                if uniformity(&p) <= 0.01 {
                    best = best.max(p.iter().sum());
                }
            }
        }
        best
    }

    #[test]
    fn three_way_design_beats_the_brute_force_scan() {
        let d = design_fanout(3, 0.01, 1e-4).unwrap();
        assert!(!d.below_target, "{d:?}");
        assert!(d.efficiency >= 0.90);
        assert!(d.uniformity <= 0.01 + 1e-9);
        let oracle = brute_force_two_term();
        assert!(oracle > 0.92 && oracle < 0.93, "oracle {oracle}");
        assert!(d.efficiency >= oracle - 1e-3, "design {} vs scan {oracle}", d.efficiency);
    }

    #[test]
    fn far_field_confirms_design() {
        let d = design_fanout(3, 0.01, 1e-4).unwrap();
        let ff = far_field_orders(&d.spec, 4096, &[-1, 0, 1]);
        for (a, p) in ff.iter().zip(&d.order_powers) {
            assert_abs_diff_eq!(a.norm_sqr(), *p, epsilon = 1e-4);
        }
        let total: f64 = far_field_orders(&d.spec, 4096, &(-2048..2048).collect::<Vec<_>>())
            .iter()
            .map(|a| a.norm_sqr())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn five_way_design_runs() {
        let d = design_fanout(5, 0.02, 1e-4).unwrap();
        assert_eq!(d.order_powers.len(), 5);
        assert!(d.efficiency > 0.7, "{d:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn series_and_fft_orders_agree(c1 in -3.0f64..3.0, c2 in -1.0f64..1.0, c3 in -1.0f64..1.0, m in -4i32..=4) {
            let spec = FanoutSpec::new(3, 1.0, vec![c1, c2, c3]).unwrap();
            let a = spec.order_amplitude(m);
            let b = far_field_orders(&spec, 512, &[m])[0];
            prop_assert!((a - b).norm() < 1e-10);
        }

        #[test]
        fn phase_grating_is_lossless(c1 in -3.0f64..3.0, c3 in -1.0f64..1.0) {
            let spec = FanoutSpec::new(3, 1.0, vec![c1, 0.0, c3]).unwrap();
            let total: f64 = (-40..=40).map(|m| spec.order_amplitude(m).norm_sqr()).sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
