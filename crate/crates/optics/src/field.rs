//! Sampled scalar fields on square grids, and the transforms between planes.
//!
//! Pixel `j` of an `n`-point axis sits at `(j - n/2)·pitch`, so the optical axis
//! falls on pixel `n/2`. Powers are `Σ|E|²·pitch²`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_WAVELENGTH: f64 = 633e-9;

/// Minimum number of pixels per 2π of azimuthal phase at the ring radius.
pub const MIN_PIXELS_PER_CYCLE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Points per side.
    pub n: usize,
    /// Meters per pixel.
    pub pitch: f64,
    pub wavelength: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 1024,
            pitch: 10e-6,
            wavelength: DEFAULT_WAVELENGTH,
        }
    }
}

impl GridSpec {
    pub fn new(n: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        let g = Self { n, pitch, wavelength };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !self.n.is_multiple_of(2) {
            return Err(Error::domain(format!("grid size must be even and at least 4, got {}", self.n)));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::domain(format!("pitch must be positive, got {}", self.pitch)));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::domain(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        Ok(())
    }

    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.pitch
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.pitch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    /// Row-major, `data[row * n + col]`; rows run along y, columns along x.
    pub data: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![C64::new(0.0, 0.0); grid.n * grid.n],
            grid,
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> C64) -> Self {
        let n = grid.n;
        let mut data = Vec::with_capacity(n * n);
        for row in 0..n {
            let y = grid.coord(row);
            for col in 0..n {
                data.push(f(grid.coord(col), y));
            }
        }
        Self { grid, data }
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn pitch(&self) -> f64 {
        self.grid.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.grid.wavelength
    }

    pub fn at(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.grid.n + col]
    }

    pub fn power(&self) -> f64 {
        self.data.iter().map(|e| e.norm_sqr()).sum::<f64>() * self.grid.pitch * self.grid.pitch
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|e| e.norm_sqr()).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|e| *e *= s);
    }

    pub fn normalize(mut self) -> Result<Self> {
        let p = self.power();
        if !(p > 0.0) {
            return Err(Error::domain("cannot normalise a field with zero power"));
        }
        self.scale(1.0 / p.sqrt());
        Ok(self)
    }

    /// Pointwise product with a transmission function sampled on the same grid.
    pub fn multiply(&mut self, t: &[C64]) -> Result<()> {
        if t.len() != self.data.len() {
            return Err(Error::domain(format!(
                "transmission has {} samples, field has {}",
                t.len(),
                self.data.len()
            )));
        }
        self.data.iter_mut().zip(t).for_each(|(e, t)| *e *= t);
        Ok(())
    }
}

/// Ring beam `exp(-((r - w)/(w/4))²)·exp(i·ell·phi)` of unit power, ring radius `waist`.
pub fn make_oam_field(ell: i32, waist: f64, grid: &GridSpec) -> Result<ScalarField> {
    grid.validate()?;
    if !(waist > 0.0) {
        return Err(Error::domain(format!("waist must be positive, got {waist}")));
    }
    let sigma = waist / 4.0;
    let per_cycle = 2.0 * PI * waist / grid.pitch / (ell.unsigned_abs().max(1) as f64);
    if per_cycle < MIN_PIXELS_PER_CYCLE {
        return Err(Error::sampling(format!(
            "ell = {ell} gives {per_cycle:.1} pixels per azimuthal cycle at r = {waist} m (need {MIN_PIXELS_PER_CYCLE})"
        )));
    }
    if waist + 4.0 * sigma > 0.5 * grid.extent() {
        return Err(Error::sampling(format!(
            "ring of radius {waist} m does not fit in a {} m window",
            grid.extent()
        )));
    }
    let l = ell as f64;
    let field = ScalarField::from_fn(*grid, |x, y| {
        let r = x.hypot(y);
        let env = (-((r - waist) / sigma).powi(2)).exp();
        C64::from_polar(env, l * y.atan2(x))
    });
    field.normalize()
}

/// Forward or inverse 2-D FFT of an `n×n` row-major buffer, unnormalised.
pub(crate) fn fft2(data: &mut [C64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(data);
    transpose(data, n);
    fft.process(data);
    transpose(data, n);
}

fn transpose(data: &mut [C64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Swaps quadrants so the pixel at `n/2` moves to index 0 and back (even `n`).
pub(crate) fn shift2(data: &mut [C64], n: usize) {
    data.rotate_left((n / 2) * n);
    for row in data.chunks_mut(n) {
        row.rotate_left(n / 2);
    }
}

/// `Σ_j E_j exp(-2πi (j - n/2)(k - n/2)/n)` in both axes.
pub(crate) fn centered_fft2(data: &mut [C64], n: usize) {
    shift2(data, n);
    fft2(data, n, false);
    shift2(data, n);
}

/// Largest distance the angular-spectrum transfer function can be sampled for.
pub fn max_propagation_distance(grid: &GridSpec) -> f64 {
    let q = 2.0 * grid.pitch / grid.wavelength;
    if q <= 1.0 {
        return f64::INFINITY;
    }
    0.5 * grid.extent() * (q * q - 1.0).sqrt()
}

/// Angular-spectrum propagation over `distance` at fixed pitch. Evanescent
/// components are dropped.
pub fn propagate(field: &ScalarField, distance: f64) -> Result<ScalarField> {
    let grid = field.grid;
    if !distance.is_finite() {
        return Err(Error::domain("propagation distance must be finite"));
    }
    let zmax = max_propagation_distance(&grid);
    if distance.abs() > zmax {
        return Err(Error::sampling(format!(
            "distance {distance} m exceeds the transfer-function sampling limit {zmax:.4} m"
        )));
    }
    if distance == 0.0 {
        return Ok(field.clone());
    }
    let n = grid.n;
    let mut data = field.data.clone();
    fft2(&mut data, n, false);
    let df = 1.0 / grid.extent();
    let inv_l2 = 1.0 / (grid.wavelength * grid.wavelength);
    let freq = |k: usize| if k < n / 2 { k as f64 } else { k as f64 - n as f64 } * df;
    for ky in 0..n {
        let fy = freq(ky);
        for kx in 0..n {
            let fx = freq(kx);
            let arg = inv_l2 - fx * fx - fy * fy;
            let h = if arg > 0.0 {
                C64::from_polar(1.0, 2.0 * PI * distance * arg.sqrt())
            } else {
                C64::new(0.0, 0.0)
            };
            data[ky * n + kx] *= h;
        }
    }
    fft2(&mut data, n, true);
    let s = 1.0 / (n * n) as f64;
    data.iter_mut().for_each(|e| *e *= s);
    Ok(ScalarField { grid, data })
}

/// Thin lens `exp(-iπ r²/(λf))`.
pub fn thin_lens(field: &ScalarField, focal: f64) -> ScalarField {
    let g = field.grid;
    let mut out = field.clone();
    for row in 0..g.n {
        let y = g.coord(row);
        for col in 0..g.n {
            let x = g.coord(col);
            out.data[row * g.n + col] *= C64::from_polar(1.0, -PI * (x * x + y * y) / (g.wavelength * focal));
        }
    }
    out
}

/// Field in the back focal plane of an `f–f` system. Output pitch is `λf/(n·pitch)`.
pub fn lens_ft(field: &ScalarField, focal: f64) -> Result<ScalarField> {
    if !(focal > 0.0 && focal.is_finite()) {
        return Err(Error::domain(format!("focal length must be positive, got {focal}")));
    }
    let g = field.grid;
    let mut data = field.data.clone();
    centered_fft2(&mut data, g.n);
    let scale = C64::new(0.0, -g.pitch * g.pitch / (g.wavelength * focal));
    data.iter_mut().for_each(|e| *e *= scale);
    Ok(ScalarField {
        grid: GridSpec {
            pitch: g.wavelength * focal / (g.n as f64 * g.pitch),
            ..g
        },
        data,
    })
}

/// Single-transform Fresnel propagation over `distance`. Output pitch is
/// `λz/(n·pitch)`; both quadratic phase factors are kept.
pub fn fresnel_transform(field: &ScalarField, distance: f64) -> Result<ScalarField> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::domain(format!("Fresnel distance must be positive, got {distance}")));
    }
    let chirp = |f: &mut ScalarField| {
        let g = f.grid;
        let c = PI / (g.wavelength * distance);
        for row in 0..g.n {
            let y = g.coord(row);
            for col in 0..g.n {
                let x = g.coord(col);
                f.data[row * g.n + col] *= C64::from_polar(1.0, c * (x * x + y * y));
            }
        }
    };
    let mut pre = field.clone();
    chirp(&mut pre);
    let mut out = lens_ft(&pre, distance)?;
    chirp(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaussian(grid: GridSpec, w0: f64, x0: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| C64::new((-((x - x0).powi(2) + y * y) / (w0 * w0)).exp(), 0.0))
            .normalize()
            .unwrap()
    }

    /// 1/e² intensity radius from the second moment along x.
    fn second_moment_radius(f: &ScalarField) -> f64 {
        let g = f.grid;
        let (mut m0, mut m2) = (0.0, 0.0);
        for row in 0..g.n {
            for col in 0..g.n {
                let i = f.at(row, col).norm_sqr();
                m0 += i;
                m2 += i * g.coord(col).powi(2);
            }
        }
        2.0 * (m2 / m0).sqrt()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1023, 1e-5, 633e-9).is_err());
        assert!(GridSpec::new(2, 1e-5, 633e-9).is_err());
        assert!(GridSpec::new(64, 0.0, 633e-9).is_err());
        assert!(GridSpec::new(64, 1e-5, -1.0).is_err());
        let g = GridSpec::default();
        assert_eq!(g.coord(512), 0.0);
        assert_eq!(g.coord(0), -512.0 * 10e-6);
    }

    #[test]
    fn oam_zero_is_real_and_nonnegative() {
        let f = make_oam_field(0, 1.5e-3, &GridSpec::default()).unwrap();
        assert!(f.data.iter().all(|e| e.im == 0.0 && e.re >= 0.0));
    }

    #[test]
    fn oam_winding_number() {
        let g = GridSpec::new(256, 20e-6, 633e-9).unwrap();
        let f = make_oam_field(3, 1.0e-3, &g).unwrap();
        // walk the boundary of a centred square and sum wrapped phase steps
        let c = g.n / 2;
        let h = 50;
        let mut path = Vec::new();
        for col in c - h..c + h {
            path.push((c - h, col));
        }
        for row in c - h..c + h {
            path.push((row, c + h));
        }
        for col in (c - h + 1..=c + h).rev() {
            path.push((c + h, col));
        }
        for row in (c - h + 1..=c + h).rev() {
            path.push((row, c - h));
        }
        let mut total = 0.0;
        for k in 0..path.len() {
            let (a, b) = (path[k], path[(k + 1) % path.len()]);
            total += (f.at(b.0, b.1) / f.at(a.0, a.1)).arg();
        }
        assert_relative_eq!(total, 2.0 * PI * 3.0, epsilon = 1e-9);
    }

    #[test]
    fn oam_default_grid_sampling() {
        let g = GridSpec::default();
        let f = make_oam_field(13, 1.5e-3, &g).unwrap();
        assert!((f.power() - 1.0).abs() < 1e-9);
        assert!(matches!(make_oam_field(200, 1.5e-3, &g), Err(Error::Sampling(_))));
        assert!(matches!(make_oam_field(1, 5e-3, &g), Err(Error::Sampling(_))));
    }

    #[test]
    fn zero_distance_is_identity() {
        let g = GridSpec::new(64, 10e-6, 633e-9).unwrap();
        let f = gaussian(g, 80e-6, 20e-6);
        assert_eq!(propagate(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn aliasing_bound_is_enforced() {
        let g = GridSpec::default();
        let zmax = max_propagation_distance(&g);
        assert!((zmax - 0.1618).abs() < 1e-3);
        let f = ScalarField::zeros(g);
        assert!(matches!(propagate(&f, 0.3), Err(Error::Sampling(_))));
        assert!(propagate(&f, 0.1).is_ok());
    }

    #[test]
    fn lens_twice_inverts_the_image() {
        let g = GridSpec::new(128, 10e-6, 633e-9).unwrap();
        let f = ScalarField::from_fn(g, |x, y| {
            C64::new((-((x - 1e-4).powi(2) + (y + 5e-5).powi(2)) / 1e-8).exp(), 0.3 * x / 1e-4)
        });
        let once = lens_ft(&f, 0.2).unwrap();
        let twice = lens_ft(&once, 0.2).unwrap();
        assert_relative_eq!(twice.pitch(), g.pitch, max_relative = 1e-12);
        assert_relative_eq!(once.power(), f.power(), max_relative = 1e-12);
        assert_relative_eq!(twice.power(), f.power(), max_relative = 1e-12);
        let n = g.n;
        for row in 1..n {
            for col in 1..n {
                let flipped = f.at(n - row, n - col);
                assert!((twice.at(row, col) + flipped).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_focus_matches_analytic_waist() {
        let g = GridSpec::new(1024, 20e-6, 633e-9).unwrap();
        let (f, w0) = (0.5, 1e-3);
        let expected = g.wavelength * f / (PI * w0);
        assert_relative_eq!(expected, 100.7e-6, max_relative = 1e-3);

        let input = gaussian(g, w0, 0.0);
        let a = propagate(&input, f).unwrap();
        let b = propagate(&thin_lens(&a, f), f).unwrap();
        assert_relative_eq!(second_moment_radius(&b), expected, max_relative = 0.02);
        assert_relative_eq!(b.power(), 1.0, max_relative = 1e-6);

        let c = lens_ft(&input, f).unwrap();
        assert_relative_eq!(second_moment_radius(&c), expected, max_relative = 0.01);
    }

    #[test]
    fn fresnel_of_lensed_field_equals_lens_ft_intensity() {
        let g = GridSpec::new(256, 10e-6, 633e-9).unwrap();
        let f = gaussian(g, 0.4e-3, 0.1e-3);
        let z = 0.25;
        let fr = fresnel_transform(&thin_lens(&f, z), z).unwrap();
        let ft = lens_ft(&f, z).unwrap();
        for (a, b) in fr.data.iter().zip(&ft.data) {
            assert!((a.norm() - b.norm()).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn propagation_conserves_power(
            x0 in -2e-4f64..2e-4, w in 4e-5f64..2e-4, kx in -2e4f64..2e4, z in -0.02f64..0.02
        ) {
            let g = GridSpec::new(128, 10e-6, 633e-9).unwrap();
            let f = ScalarField::from_fn(g, |x, y| {
                C64::from_polar((-((x - x0).powi(2) + y * y) / (w * w)).exp(), kx * x)
            });
            let p = propagate(&f, z).unwrap();
            prop_assert!((p.power() / f.power() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn fresnel_conserves_power(z in 0.05f64..1.0, w in 1e-4f64..4e-4) {
            let g = GridSpec::new(128, 10e-6, 633e-9).unwrap();
            let f = gaussian(g, w, 0.0);
            let p = fresnel_transform(&f, z).unwrap();
            prop_assert!((p.power() - 1.0).abs() < 1e-9);
        }
    }
}
