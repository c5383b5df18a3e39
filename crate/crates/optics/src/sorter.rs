//! The log-polar sorter chain and its crosstalk.
//!
//! R1 (with an integrated lens of focal length `f`) sits in the input plane, R2
//! at distance `f`. After R2 the beam is a strip of length `2πa` along `v`
//! carrying the tilt `exp(i·ell·v/a)`. A relay (L1, optional fan-out grating in
//! its Fourier plane, phase corrector in its image plane) is followed by L2,
//! which focuses each tilt to a spot along the sorted axis.
//!
//! Downstream of R2 every optic acts along `v` only, so each `u` column is
//! propagated as an independent 1-D line and the detected powers are summed
//! over `u`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::fanout::FanoutSpec;
use crate::field::{lens_ft, make_oam_field, GridSpec, ScalarField};
use crate::{Error, Result};

/// Columns carrying less than this share of the power are skipped after R2.
const COLUMN_CUTOFF: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SorterGeometry {
    /// Azimuth-to-position scale (m).
    pub a: f64,
    /// Radial reference (m).
    pub b: f64,
    /// Focal length of the lens terms in R1 and R2 (m).
    pub f: f64,
    pub n_index: f64,
}

impl SorterGeometry {
    pub fn new(a: f64, b: f64, f: f64, n_index: f64) -> Result<Self> {
        let g = Self { a, b, f, n_index };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("f", self.f)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("geometry.{name} must be positive, got {v}")));
            }
        }
        if !(self.n_index > 1.0 && self.n_index < 2.0) {
            return Err(Error::domain(format!("refractive index must lie in (1, 2), got {}", self.n_index)));
        }
        Ok(())
    }

    /// Geometry whose unwrapped strip spans half of the R2-plane window, with
    /// the radial reference on the ring.
    pub fn for_grid(grid: &GridSpec, ring_radius: f64, f: f64) -> Self {
        Self {
            a: grid.wavelength * f / (4.0 * PI * grid.pitch),
            b: ring_radius,
            f,
            n_index: 1.49,
        }
    }

    pub fn strip_length(&self) -> f64 {
        2.0 * PI * self.a
    }
}

/// Phase profile of a refractive element, in radians per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    pub grid: GridSpec,
    pub phase: Vec<f64>,
    /// Pixels forced to zero transmission.
    pub blocked: Vec<bool>,
}

impl PhaseMask {
    pub fn transmission(&self) -> Vec<C64> {
        self.phase
            .iter()
            .zip(&self.blocked)
            .map(|(&p, &b)| if b { C64::new(0.0, 0.0) } else { C64::from_polar(1.0, p) })
            .collect()
    }

    /// Physical thickness profile for index `n_index`.
    pub fn thickness(&self, n_index: f64) -> Vec<f64> {
        let k = 2.0 * PI / self.grid.wavelength;
        self.phase.iter().map(|p| p / (k * (n_index - 1.0))).collect()
    }
}

/// Phase of R1 at `(x, y)`, including its lens term.
pub fn r1_phase(geom: &SorterGeometry, wavelength: f64, x: f64, y: f64) -> f64 {
    let r = x.hypot(y);
    let c = 2.0 * PI * geom.a / (wavelength * geom.f);
    c * (y * y.atan2(x) - x * (r / geom.b).ln() + x) - PI * r * r / (wavelength * geom.f)
}

/// Phase of R2 at `(u, v)`, including its lens term.
pub fn r2_phase(geom: &SorterGeometry, wavelength: f64, u: f64, v: f64) -> f64 {
    let c = 2.0 * PI * geom.a * geom.b / (wavelength * geom.f);
    -c * (-u / geom.a).exp() * (v / geom.a).cos() - PI * (u * u + v * v) / (wavelength * geom.f)
}

/// R1 sampled on `grid`; the on-axis pixel is blocked.
pub fn element_phase_r1(geom: &SorterGeometry, grid: &GridSpec) -> Result<PhaseMask> {
    geom.validate()?;
    grid.validate()?;
    let n = grid.n;
    let mut phase = Vec::with_capacity(n * n);
    let mut blocked = Vec::with_capacity(n * n);
    for row in 0..n {
        let y = grid.coord(row);
        for col in 0..n {
            let x = grid.coord(col);
            let singular = x == 0.0 && y == 0.0;
            phase.push(if singular { 0.0 } else { r1_phase(geom, grid.wavelength, x, y) });
            blocked.push(singular);
        }
    }
    Ok(PhaseMask { grid: *grid, phase, blocked })
}

/// R2 sampled on `grid`, with `u` along columns and `v` along rows.
pub fn element_phase_r2(geom: &SorterGeometry, grid: &GridSpec) -> Result<PhaseMask> {
    geom.validate()?;
    grid.validate()?;
    let n = grid.n;
    let mut phase = Vec::with_capacity(n * n);
    for row in 0..n {
        let v = grid.coord(row);
        for col in 0..n {
            phase.push(r2_phase(geom, grid.wavelength, grid.coord(col), v));
        }
    }
    Ok(PhaseMask {
        grid: *grid,
        phase,
        blocked: vec![false; n * n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SorterSetup {
    pub grid: GridSpec,
    pub geometry: SorterGeometry,
    /// Ring radius of the input modes (m).
    pub waist: f64,
    /// R1 to R2 distance (m).
    pub spacing: f64,
    /// Relay buffer length as a multiple of the grid size.
    pub relay_pad: usize,
    /// Sorted-plane transform length as a multiple of the grid size.
    pub l2_pad: usize,
}

impl Default for SorterSetup {
    fn default() -> Self {
        let grid = GridSpec::default();
        let waist = 1.5e-3;
        let geometry = SorterGeometry::for_grid(&grid, waist, 0.3);
        Self {
            grid,
            geometry,
            waist,
            spacing: geometry.f,
            relay_pad: 4,
            l2_pad: 16,
        }
    }
}

impl SorterSetup {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.geometry.validate()?;
        if !(self.waist > 0.0) {
            return Err(Error::domain(format!("waist must be positive, got {}", self.waist)));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::domain(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.relay_pad < 1 || self.l2_pad < self.relay_pad {
            return Err(Error::domain("need relay_pad >= 1 and l2_pad >= relay_pad"));
        }
        Ok(())
    }

    /// Pitch in the R2 plane.
    pub fn output_pitch(&self) -> f64 {
        self.grid.wavelength * self.spacing / (self.grid.n as f64 * self.grid.pitch)
    }

    /// Grating period that places the copies edge to edge.
    pub fn matched_period(&self) -> f64 {
        self.grid.wavelength * self.geometry.f / self.geometry.strip_length()
    }
}

/// Power along the sorted axis, summed over `u`, as a share of the input power.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedProfile {
    pub power: Vec<f64>,
    /// Bin of zero spatial frequency.
    pub center: f64,
    /// Nominal spot spacing in bins.
    pub bins_per_mode: f64,
}

/// Field just before L2.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayImage {
    /// `|E|²` along `v` summed over `u`.
    pub intensity: Vec<f64>,
    /// The `u` column with the most power.
    pub strongest: Vec<C64>,
    pub pitch: f64,
}

pub struct Sorter {
    setup: SorterSetup,
    t_in: Vec<C64>,
    t_out: Vec<C64>,
    out_grid: GridSpec,
    relay_fwd: Arc<dyn Fft<f64>>,
    relay_inv: Arc<dyn Fft<f64>>,
    l2: Arc<dyn Fft<f64>>,
}

impl Sorter {
    pub fn new(setup: SorterSetup) -> Result<Self> {
        setup.validate()?;
        let grid = setup.grid;
        let geom = setup.geometry;
        let z = setup.spacing;
        let out_grid = GridSpec {
            pitch: setup.output_pitch(),
            ..grid
        };
        let lam = grid.wavelength;

        // R1 and R2 with the Fresnel chirps of the R1→R2 gap folded in
        let r1 = element_phase_r1(&geom, &grid)?;
        let mut t_in = r1.transmission();
        chirp(&mut t_in, &grid, PI / (lam * z));
        let r2 = element_phase_r2(&geom, &out_grid)?;
        let mut t_out = r2.transmission();
        chirp(&mut t_out, &out_grid, PI / (lam * z));

        let mut planner = FftPlanner::new();
        let m = setup.relay_pad * grid.n;
        Ok(Self {
            relay_fwd: planner.plan_fft_forward(m),
            relay_inv: planner.plan_fft_inverse(m),
            l2: planner.plan_fft_forward(setup.l2_pad * grid.n),
            setup,
            t_in,
            t_out,
            out_grid,
        })
    }

    pub fn setup(&self) -> &SorterSetup {
        &self.setup
    }

    pub fn output_grid(&self) -> GridSpec {
        self.out_grid
    }

    /// Strip length in R2-plane samples.
    pub fn strip_samples(&self) -> f64 {
        self.setup.geometry.strip_length() / self.out_grid.pitch
    }

    /// Mode `ell` just after R2.
    pub fn log_polar_field(&self, ell: i32) -> Result<ScalarField> {
        let mut field = make_oam_field(ell, self.setup.waist, &self.setup.grid)?;
        field.multiply(&self.t_in)?;
        let mut out = lens_ft(&field, self.setup.spacing)?;
        out.multiply(&self.t_out)?;
        Ok(out)
    }

    fn relay_filters(&self, fanout: &FanoutSpec) -> Result<(Vec<C64>, Vec<C64>)> {
        let m = self.relay_fwd.len();
        let f_relay = self.setup.geometry.f;
        let shift = self.setup.grid.wavelength * f_relay / fanout.period / self.out_grid.pitch;
        if (fanout.copies as f64) * shift + self.out_grid.n as f64 > m as f64 {
            return Err(Error::sampling(format!(
                "{} copies shifted by {shift:.1} samples do not fit a relay buffer of {m}",
                fanout.copies
            )));
        }
        let orders: Vec<(i32, C64)> = fanout.target_orders().map(|o| (o, fanout.order_amplitude(o))).collect();
        let grating = (0..m)
            .map(|k| {
                let ks = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
                orders
                    .iter()
                    .map(|&(o, c)| c * C64::from_polar(1.0, -2.0 * PI * ks * o as f64 * shift / m as f64))
                    .sum()
            })
            .collect();
        let h = (fanout.copies / 2) as i32;
        let corrector = (0..m)
            .map(|i| {
                let region = ((i as f64 - (m / 2) as f64) / shift).round() as i32;
                if region.abs() <= h {
                    C64::from_polar(1.0, -fanout.order_amplitude(region).arg())
                } else {
                    C64::new(1.0, 0.0)
                }
            })
            .collect();
        Ok((grating, corrector))
    }

    /// Columns of the R2-plane field worth propagating, as `(col, line along v)`.
    fn active_lines(&self, p2: &ScalarField) -> Vec<(usize, Vec<C64>)> {
        let n = p2.n();
        let col_power: Vec<f64> = (0..n).map(|c| (0..n).map(|r| p2.at(r, c).norm_sqr()).sum()).collect();
        let total: f64 = col_power.iter().sum();
        (0..n)
            .filter(|&c| col_power[c] > COLUMN_CUTOFF * total)
            .map(|c| (c, (0..n).map(|r| p2.at(r, c)).collect()))
            .collect()
    }

    /// Relay one line from R2 to the plane before L2.
    fn relay_line(&self, line: &[C64], filters: Option<&(Vec<C64>, Vec<C64>)>) -> Vec<C64> {
        let m = self.relay_fwd.len();
        let n = line.len();
        let mut buf = vec![C64::new(0.0, 0.0); m];
        let off = (m - n) / 2;
        buf[off..off + n].copy_from_slice(line);
        if let Some((grating, corrector)) = filters {
            self.relay_fwd.process(&mut buf);
            let s = 1.0 / m as f64;
            buf.iter_mut().zip(grating).for_each(|(b, g)| *b *= g * s);
            self.relay_inv.process(&mut buf);
            buf.iter_mut().zip(corrector).for_each(|(b, c)| *b *= c);
        }
        buf
    }

    pub fn relay_image(&self, ell: i32, fanout: Option<&FanoutSpec>) -> Result<RelayImage> {
        let p2 = self.log_polar_field(ell)?;
        let filters = fanout.map(|f| self.relay_filters(f)).transpose()?;
        let m = self.relay_fwd.len();
        let mut intensity = vec![0.0; m];
        let mut strongest = (0.0, Vec::new());
        for (_, line) in self.active_lines(&p2) {
            let out = self.relay_line(&line, filters.as_ref());
            let p: f64 = out.iter().map(|e| e.norm_sqr()).sum();
            intensity.iter_mut().zip(&out).for_each(|(i, e)| *i += e.norm_sqr());
            if p > strongest.0 {
                strongest = (p, out);
            }
        }
        Ok(RelayImage {
            intensity,
            strongest: strongest.1,
            pitch: self.out_grid.pitch,
        })
    }

    fn profile_from(&self, p2: &ScalarField, filters: Option<&(Vec<C64>, Vec<C64>)>) -> SortedProfile {
        let m = self.relay_fwd.len();
        let l = self.l2.len();
        let mut power = vec![0.0; l];
        let mut buf = vec![C64::new(0.0, 0.0); l];
        let off = (l - m) / 2;
        for (_, line) in self.active_lines(p2) {
            let relayed = self.relay_line(&line, filters);
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            buf[off..off + m].copy_from_slice(&relayed);
            self.l2.process(&mut buf);
            power.iter_mut().zip(&buf).for_each(|(p, e)| *p += e.norm_sqr());
        }
        power.rotate_left(l / 2);
        let s = self.out_grid.pitch * self.out_grid.pitch / l as f64;
        power.iter_mut().for_each(|p| *p *= s);
        SortedProfile {
            power,
            center: (l / 2) as f64,
            bins_per_mode: l as f64 / self.strip_samples(),
        }
    }

    /// Sorted-plane profile of mode `ell` for each of the given relay settings.
    pub fn sorted_profiles(&self, ell: i32, fanouts: &[Option<&FanoutSpec>]) -> Result<Vec<SortedProfile>> {
        let p2 = self.log_polar_field(ell)?;
        fanouts
            .iter()
            .map(|f| {
                let filters = f.map(|f| self.relay_filters(f)).transpose()?;
                Ok(self.profile_from(&p2, filters.as_ref()))
            })
            .collect()
    }

    pub fn sorted_profile(&self, ell: i32, fanout: Option<&FanoutSpec>) -> Result<SortedProfile> {
        Ok(self.sorted_profiles(ell, &[fanout])?.remove(0))
    }

    /// Crosstalk for modes `-l_max..=l_max` under each relay setting.
    pub fn crosstalk(&self, l_max: i32, fanouts: &[Option<&FanoutSpec>]) -> Result<Vec<CrosstalkReport>> {
        if l_max < 1 {
            return Err(Error::domain(format!("need at least three modes, got l_max = {l_max}")));
        }
        let ells: Vec<i32> = (-l_max..=l_max).collect();
        let per_ell: Vec<Vec<SortedProfile>> = ells
            .par_iter()
            .map(|&ell| self.sorted_profiles(ell, fanouts))
            .collect::<Result<_>>()?;
        (0..fanouts.len())
            .map(|k| {
                let profiles: Vec<SortedProfile> = per_ell.iter().map(|p| p[k].clone()).collect();
                let windows = DetectionWindows::calibrate(&ells, &profiles)?;
                CrosstalkReport::build(ells.clone(), &profiles, windows)
            })
            .collect()
    }
}

fn chirp(t: &mut [C64], grid: &GridSpec, c: f64) {
    let n = grid.n;
    for row in 0..n {
        let y = grid.coord(row);
        for col in 0..n {
            let x = grid.coord(col);
            t[row * n + col] *= C64::from_polar(1.0, c * (x * x + y * y));
        }
    }
}

/// Equal-width detection intervals along the sorted axis, in bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindows {
    /// Centre of the window assigned to `ell = 0`.
    pub center0: f64,
    /// Spacing between window centres.
    pub pitch: f64,
    pub width: f64,
}

impl DetectionWindows {
    pub fn new(center0: f64, pitch: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(pitch.abs() > 0.0) {
            return Err(Error::domain("window width and pitch must be nonzero"));
        }
        if width > pitch.abs() * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "windows of width {width} overlap at pitch {}",
                pitch.abs()
            )));
        }
        Ok(Self { center0, pitch, width })
    }

    /// Calibrates from local spot centroids: an affine fit gives the pitch,
    /// the `ell = 0` spot the origin. Width equals the pitch.
    pub fn calibrate(ells: &[i32], profiles: &[SortedProfile]) -> Result<Self> {
        let centroids: Vec<f64> = ells.iter().zip(profiles).map(|(&l, p)| spot_centroid(p, l)).collect();
        let (intercept, slope) = affine_fit(ells, &centroids)?;
        let center0 = ells
            .iter()
            .position(|&l| l == 0)
            .map(|i| centroids[i])
            .unwrap_or(intercept);
        Self::new(center0, slope, slope.abs())
    }

    pub fn center(&self, ell: i32) -> f64 {
        self.center0 + self.pitch * ell as f64
    }

    pub fn power_in(&self, profile: &[f64], ell: i32) -> f64 {
        let c = self.center(ell);
        let lo = (c - 0.5 * self.width).ceil().max(0.0) as usize;
        let hi = ((c + 0.5 * self.width).ceil().max(0.0) as usize).min(profile.len());
        profile.get(lo..hi).map_or(0.0, |s| s.iter().sum())
    }
}

/// Centroid of the spot near the nominal position of `ell`.
pub fn spot_centroid(profile: &SortedProfile, ell: i32) -> f64 {
    let p = &profile.power;
    let nominal = profile.center + ell as f64 * profile.bins_per_mode;
    let reach = profile.bins_per_mode;
    let lo = (nominal - reach).floor().max(0.0) as usize;
    let hi = ((nominal + reach).ceil() as usize).min(p.len() - 1);
    let peak = (lo..=hi).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(lo);
    let half = 0.5 * profile.bins_per_mode;
    let lo = (peak as f64 - half).ceil().max(0.0) as usize;
    let hi = ((peak as f64 + half).floor() as usize).min(p.len() - 1);
    let (mut m0, mut m1) = (0.0, 0.0);
    for (b, &v) in p.iter().enumerate().take(hi + 1).skip(lo) {
        m0 += v;
        m1 += v * b as f64;
    }
    if m0 > 0.0 {
        m1 / m0
    } else {
        nominal
    }
}

fn affine_fit(x: &[i32], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::domain("need at least two spots to calibrate"));
    }
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v as f64 - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, b)| (a as f64 - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkReport {
    pub ells: Vec<i32>,
    /// `matrix[i][j]`: share of mode `ells[i]` detected in the window of `ells[j]`.
    pub matrix: Vec<Vec<f64>>,
    pub windows: DetectionWindows,
    pub centroids: Vec<f64>,
    /// Mean of `matrix[i][i ± 1]` over all nearest-neighbour pairs.
    pub mean_neighbor_overlap: f64,
    /// Mean over interior modes of the summed power in both neighbouring windows.
    pub mean_two_sided_leakage: f64,
    /// Largest centroid deviation from the affine fit, in units of the pitch.
    pub linearity_residual: f64,
}

impl CrosstalkReport {
    pub fn build(ells: Vec<i32>, profiles: &[SortedProfile], windows: DetectionWindows) -> Result<Self> {
        if ells.len() != profiles.len() {
            return Err(Error::domain("one profile per mode is required"));
        }
        let matrix: Vec<Vec<f64>> = profiles
            .iter()
            .map(|p| ells.iter().map(|&l2| windows.power_in(&p.power, l2)).collect())
            .collect();
        let centroids: Vec<f64> = ells.iter().zip(profiles).map(|(&l, p)| spot_centroid(p, l)).collect();
        let (intercept, slope) = affine_fit(&ells, &centroids)?;
        let linearity_residual = ells
            .iter()
            .zip(&centroids)
            .map(|(&l, c)| (c - intercept - slope * l as f64).abs() / slope.abs())
            .fold(0.0, f64::max);
        let d = ells.len();
        let pairs: Vec<f64> = (0..d.saturating_sub(1))
            .flat_map(|i| [matrix[i][i + 1], matrix[i + 1][i]])
            .collect();
        let mean_neighbor_overlap = pairs.iter().sum::<f64>() / pairs.len().max(1) as f64;
        let interior: Vec<f64> = (1..d.saturating_sub(1))
            .map(|i| matrix[i][i - 1] + matrix[i][i + 1])
            .collect();
        let mean_two_sided_leakage = interior.iter().sum::<f64>() / interior.len().max(1) as f64;
        Ok(Self {
            ells,
            matrix,
            windows,
            centroids,
            mean_neighbor_overlap,
            mean_two_sided_leakage,
            linearity_residual,
        })
    }

    pub fn is_diagonally_dominant(&self) -> bool {
        self.matrix.iter().enumerate().all(|(i, row)| row.iter().all(|&v| v <= row[i]))
    }
}

/// Crosstalk of the default chain for modes `-l_max..=l_max`.
pub fn crosstalk_matrix(setup: &SorterSetup, fanout: Option<&FanoutSpec>, l_max: i32) -> Result<CrosstalkReport> {
    Ok(Sorter::new(*setup)?.crosstalk(l_max, &[fanout])?.remove(0))
}

/// Phase statistics of an R2-plane field against the ideal tilt `ell·v/a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavefrontAudit {
    /// Intensity-weighted mean phase gradient along `v` (rad/m).
    pub slope: f64,
    /// Intensity-weighted RMS phase residual after removing tilt and piston (rad).
    pub rms_residual: f64,
}

/// Audits pixels whose intensity exceeds `threshold` times the peak.
pub fn wavefront_audit(field: &ScalarField, ell: i32, a: f64, threshold: f64) -> WavefrontAudit {
    let n = field.n();
    let g = field.grid;
    let intensity = field.intensity();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    let cut = threshold * peak;
    let k = ell as f64 / a;

    let (mut wsum, mut gsum) = (0.0, 0.0);
    for row in 0..n - 1 {
        for col in 0..n {
            let (i0, i1) = (intensity[row * n + col], intensity[(row + 1) * n + col]);
            if i0 > cut && i1 > cut {
                let w = i0.min(i1);
                wsum += w;
                gsum += w * (field.at(row + 1, col) / field.at(row, col)).arg() / g.pitch;
            }
        }
    }
    let slope = gsum / wsum;

    let detilted = |row: usize, col: usize| field.at(row, col) * C64::from_polar(1.0, -k * g.coord(row));
    let mut mean = C64::new(0.0, 0.0);
    for row in 0..n {
        for col in 0..n {
            if intensity[row * n + col] > cut {
                mean += detilted(row, col);
            }
        }
    }
    let piston = mean.arg();
    let (mut w, mut s2) = (0.0, 0.0);
    for row in 0..n {
        for col in 0..n {
            let i = intensity[row * n + col];
            if i > cut {
                let r = (detilted(row, col) * C64::from_polar(1.0, -piston)).arg();
                w += i;
                s2 += i * r * r;
            }
        }
    }
    WavefrontAudit {
        slope,
        rms_residual: (s2 / w).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geom() -> SorterGeometry {
        SorterGeometry::for_grid(&GridSpec::default(), 1.5e-3, 0.3)
    }

    #[test]
    fn default_geometry() {
        let g = geom();
        assert_relative_eq!(g.a, 1.5112e-3, max_relative = 1e-3);
        assert!(SorterGeometry::new(-1.0, 1.0, 1.0, 1.5).is_err());
        assert!(SorterGeometry::new(1.0, 1.0, 1.0, 2.5).is_err());
        let s = SorterSetup::default();
        assert_relative_eq!(s.output_pitch(), 18.54e-6, max_relative = 1e-3);
        // strip spans half of the R2 window
        assert_relative_eq!(g.strip_length() / s.output_pitch(), 512.0, max_relative = 1e-12);
    }

    #[test]
    fn r1_reduces_to_a_thin_lens() {
        let g = SorterGeometry { a: 1e-30, ..geom() };
        let lam = 633e-9;
        for (x, y) in [(1e-3, 0.0), (3e-4, -2e-3), (-1e-3, 1e-3)] {
            let lens = -PI * (x * x + y * y) / (lam * g.f);
            assert!((r1_phase(&g, lam, x, y) - lens).abs() < 1e-9);
        }
    }

    #[test]
    fn r1_mapping_gradient() {
        // ∇(phase without lens) = (2πa/λf)·(−ln(r/b), θ)
        let g = geom();
        let lam = 633e-9;
        let lensless = |x: f64, y: f64| r1_phase(&g, lam, x, y) + PI * (x * x + y * y) / (lam * g.f);
        let c = 2.0 * PI * g.a / (lam * g.f);
        let h = 1e-9;
        for (x, y) in [(1e-3, 5e-4), (-7e-4, 1.2e-3), (2e-3, -1e-3)] {
            let gx = (lensless(x + h, y) - lensless(x - h, y)) / (2.0 * h);
            let gy = (lensless(x, y + h) - lensless(x, y - h)) / (2.0 * h);
            let r: f64 = x.hypot(y);
            assert_relative_eq!(gx, -c * (r / g.b).ln(), max_relative = 1e-5, epsilon = 1.0);
            assert_relative_eq!(gy, c * y.atan2(x), max_relative = 1e-5);
        }
    }

    #[test]
    fn singular_pixel_is_blocked() {
        let grid = GridSpec::new(64, 10e-6, 633e-9).unwrap();
        let m = element_phase_r1(&geom(), &grid).unwrap();
        assert_eq!(m.blocked.iter().filter(|&&b| b).count(), 1);
        assert!(m.blocked[32 * 64 + 32]);
        assert_eq!(m.transmission()[32 * 64 + 32], C64::new(0.0, 0.0));
        assert!(m.phase.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn thickness_scales_with_index() {
        let grid = GridSpec::new(16, 10e-6, 633e-9).unwrap();
        let m = element_phase_r2(&geom(), &grid).unwrap();
        let t = m.thickness(1.49);
        let k = 2.0 * PI / 633e-9;
        assert_relative_eq!(t[5] * k * 0.49, m.phase[5], max_relative = 1e-12);
    }

    #[test]
    fn window_validation() {
        assert!(DetectionWindows::new(0.0, 10.0, 12.0).is_err());
        assert!(DetectionWindows::new(0.0, 10.0, 0.0).is_err());
        let w = DetectionWindows::new(5.0, 10.0, 10.0).unwrap();
        let profile: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert_eq!(w.power_in(&profile, 0), (0..10).map(|i| i as f64).sum::<f64>());
        assert_eq!(w.power_in(&profile, 1), (10..20).map(|i| i as f64).sum::<f64>());
        assert_eq!(w.power_in(&profile, -3), 0.0);
    }

    proptest! {
        #[test]
        fn r1_arctan_term_is_odd_in_y(x in -3e-3f64..3e-3, y in 1e-6f64..3e-3) {
            let g = geom();
            let lam = 633e-9;
            prop_assert!((y.atan2(x) + (-y).atan2(x)).abs() < 1e-12);
            // the odd factor is multiplied by y, so the element itself is even in y
            let p = |y: f64| r1_phase(&g, lam, x, y);
            prop_assert!((p(y) - p(-y)).abs() < 1e-9 * p(y).abs().max(1.0));
        }

        #[test]
        fn r2_is_even_in_v(u in -5e-3f64..5e-3, v in -5e-3f64..5e-3) {
            let g = geom();
            let lam = 633e-9;
            prop_assert_eq!(r2_phase(&g, lam, u, v), r2_phase(&g, lam, u, -v));
        }
    }
}
