//! Experiment configuration: a TOML file with `[state]`, `[measurement]`,
//! `[noise]`, `[sorter]` and `[output]` tables.
//!
//! Every table and key is optional and falls back to the defaults below. Unknown
//! keys are rejected. [`ExperimentConfig::validate`] checks every value and
//! returns all problems at once, each tagged with its dotted key path.
//!
//! ```toml
//! [state]
//! delta_theta = 0.6981317007977318   # aperture width (rad)
//! theta0 = [0.0, 0.3490658503988659, -0.3490658503988659]
//! l_max = 13
//!
//! [measurement]
//! alpha = 0.3490658503988659
//! theta_index = 0
//! runs = 50
//!
//! [noise]
//! enabled = true
//! photons_per_setting = 100000
//! dark_rate_hz = 100.0        # placeholder magnitude
//! background_rate_hz = 0.0    # placeholder magnitude
//! integration_s = 1.0
//! seed = 0
//! ```

use std::f64::consts::{PI, TAU};
use std::path::Path;

use oamdm_core::detection::NoiseSpec;
use oamdm_optics::misalign::Misalignment;
use oamdm_optics::{GridSpec, SorterGeometry, SorterSetup};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ConfigIssue, Result};

const MAX_L: i32 = 64;
const MAX_RUNS: usize = 10_000;
const MAX_ROTATIONS: usize = 16;
const MAX_PHOTONS: u64 = 1_000_000_000_000;
const MIN_PIXELS_PER_CYCLE: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub state: StateConfig,
    pub measurement: MeasurementConfig,
    pub noise: NoiseConfig,
    pub sorter: SorterConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    /// Angular aperture width (rad).
    pub delta_theta: f64,
    /// Aperture rotations to measure (rad); must include the unrotated reference `0`.
    pub theta0: Vec<f64>,
    pub l_max: i32,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self {
            delta_theta: TAU / 9.0,
            theta0: vec![0.0, PI / 9.0, -PI / 9.0],
            l_max: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    /// Pointer rotation angle (rad).
    pub alpha: f64,
    /// Post-selected angular position `theta_n = 2πn/d`.
    pub theta_index: usize,
    /// Independent repetitions averaged per series.
    pub runs: usize,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            alpha: PI / 9.0,
            theta_index: 0,
            runs: 50,
        }
    }
}

/// Detector model. The dark and background rates are placeholders, not measured
/// values. With `enabled = false` the weak values are computed from exact
/// expectations and `runs` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub photons_per_setting: u64,
    pub dark_rate_hz: f64,
    pub background_rate_hz: f64,
    pub integration_s: f64,
    /// Master seed.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let d = NoiseSpec::default();
        Self {
            enabled: true,
            photons_per_setting: d.photons_per_setting,
            dark_rate_hz: d.dark_rate_hz,
            background_rate_hz: d.background_rate_hz,
            integration_s: d.integration_s,
            seed: d.seed,
        }
    }
}

impl NoiseConfig {
    /// Detector model of series `k` (the k-th entry of `state.theta0`).
    ///
    /// Its seed is `seed XOR (k << 48)`. Within a series every draw then comes
    /// from ChaCha20 keyed by that seed on a stream selected by run, mode,
    /// basis, port and count kind, so results do not depend on thread count.
    pub fn series_spec(&self, k: usize) -> NoiseSpec {
        NoiseSpec {
            photons_per_setting: self.photons_per_setting,
            dark_rate_hz: self.dark_rate_hz,
            background_rate_hz: self.background_rate_hz,
            integration_s: self.integration_s,
            seed: self.seed ^ ((k as u64) << 48),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SorterConfig {
    pub grid_n: usize,
    pub pitch_m: f64,
    pub wavelength_m: f64,
    /// Ring radius of the input modes.
    pub waist_m: f64,
    pub f_m: f64,
    /// Log-polar scale; defaults to the value that fills half the R2 window.
    pub a_m: Option<f64>,
    /// Radial reference; defaults to `waist_m`.
    pub b_m: Option<f64>,
    /// R1 to R2 distance; defaults to `f_m`.
    pub spacing_m: Option<f64>,
    pub n_index: f64,
    pub relay_pad: usize,
    pub l2_pad: usize,
    pub fanout: bool,
    pub copies: usize,
    pub uniformity_tol: f64,
    /// Fan-out period; defaults to the period that tiles the copies edge to edge.
    pub period_m: Option<f64>,
    /// Phase `defocus_rad·ell²` added to every measured series.
    pub defocus_rad: f64,
    /// Phase `tilt_rad·ell` added to every measured series.
    pub tilt_rad: f64,
    /// Extra `drift_tilt_rad·ell` added to the rotated series only, as if the
    /// alignment moved between the reference and the rotated acquisitions.
    pub drift_tilt_rad: f64,
}

impl Default for SorterConfig {
    fn default() -> Self {
        let s = SorterSetup::default();
        Self {
            grid_n: s.grid.n,
            pitch_m: s.grid.pitch,
            wavelength_m: s.grid.wavelength,
            waist_m: s.waist,
            f_m: s.geometry.f,
            a_m: None,
            b_m: None,
            spacing_m: None,
            n_index: s.geometry.n_index,
            relay_pad: s.relay_pad,
            l2_pad: s.l2_pad,
            fanout: true,
            copies: 3,
            uniformity_tol: 0.01,
            period_m: None,
            defocus_rad: 0.0,
            tilt_rad: 0.0,
            drift_tilt_rad: 0.0,
        }
    }
}

impl SorterConfig {
    pub fn setup(&self) -> SorterSetup {
        let grid = GridSpec {
            n: self.grid_n,
            pitch: self.pitch_m,
            wavelength: self.wavelength_m,
        };
        let base = SorterGeometry::for_grid(&grid, self.waist_m, self.f_m);
        let geometry = SorterGeometry {
            a: self.a_m.unwrap_or(base.a),
            b: self.b_m.unwrap_or(self.waist_m),
            f: self.f_m,
            n_index: self.n_index,
        };
        SorterSetup {
            grid,
            geometry,
            waist: self.waist_m,
            spacing: self.spacing_m.unwrap_or(self.f_m),
            relay_pad: self.relay_pad,
            l2_pad: self.l2_pad,
        }
    }

    pub fn fanout_period(&self) -> f64 {
        self.period_m.unwrap_or_else(|| self.setup().matched_period())
    }

    /// Alignment phase applied to the reference series.
    pub fn misalignment(&self) -> Misalignment {
        Misalignment {
            defocus: self.defocus_rad,
            tilt: self.tilt_rad,
        }
    }

    /// Alignment phase applied to rotated series.
    pub fn rotated_misalignment(&self) -> Misalignment {
        Misalignment {
            defocus: self.defocus_rad,
            tilt: self.tilt_rad + self.drift_tilt_rad,
        }
    }
}

pub const KNOWN_FORMATS: [&str; 2] = ["csv", "json"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Not written back out, so a bundle's config is independent of where it lives.
    #[serde(skip_serializing)]
    pub directory: String,
    /// `csv` enables the tables, `json` the fits and summaries.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "oamdm-out".into(),
            formats: KNOWN_FORMATS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noiseless: bool,
    pub out: Option<String>,
}

impl ExperimentConfig {
    /// Parses TOML; type errors and unknown keys are reported with their key path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::config("<document>", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { "<document>".to_string() } else { key };
            CliError::config(key, e.inner().message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::config("<document>", e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.noise.seed = seed;
        }
        if o.noiseless {
            self.noise.enabled = false;
        }
        if let Some(out) = &o.out {
            self.output.directory = out.clone();
        }
    }

    /// Index of the unrotated reference within `state.theta0`.
    pub fn reference_index(&self) -> usize {
        self.state.theta0.iter().position(|&t| t == 0.0).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        self.collect_issues(&mut issues);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(issues))
        }
    }

    fn collect_issues(&self, out: &mut Vec<ConfigIssue>) {
        let mut bad = |key: &str, msg: String| out.push(ConfigIssue::new(key, msg));

        let s = &self.state;
        if !(s.delta_theta.is_finite() && s.delta_theta > 0.0 && s.delta_theta <= TAU) {
            bad("state.delta_theta", format!("must lie in (0, 2π], got {}", s.delta_theta));
        }
        if !(1..=MAX_L).contains(&s.l_max) {
            bad("state.l_max", format!("must lie in [1, {MAX_L}], got {}", s.l_max));
        }
        if s.theta0.is_empty() || s.theta0.len() > MAX_ROTATIONS {
            bad("state.theta0", format!("needs 1 to {MAX_ROTATIONS} angles, got {}", s.theta0.len()));
        }
        for (i, t) in s.theta0.iter().enumerate() {
            if !(t.is_finite() && t.abs() <= TAU) {
                bad(&format!("state.theta0[{i}]"), format!("must be finite with |θ| <= 2π, got {t}"));
            }
            let label = crate::measure::series_label(*t);
            if s.theta0[..i].iter().any(|u| crate::measure::series_label(*u) == label) {
                bad(&format!("state.theta0[{i}]"), format!("angle {t} duplicates an earlier one to 4 decimals"));
            }
        }
        if !s.theta0.contains(&0.0) {
            bad("state.theta0", "must include 0, the unrotated reference".into());
        }

        let m = &self.measurement;
        if !(m.alpha.is_finite() && m.alpha > 0.0 && m.alpha <= PI / 2.0) {
            bad("measurement.alpha", format!("must lie in (0, π/2], got {}", m.alpha));
        }
        let d = 2 * s.l_max.clamp(0, MAX_L) as usize + 1;
        if m.theta_index >= d {
            bad("measurement.theta_index", format!("must be below the dimension {d}, got {}", m.theta_index));
        }
        if !(1..=MAX_RUNS).contains(&m.runs) {
            bad("measurement.runs", format!("must lie in [1, {MAX_RUNS}], got {}", m.runs));
        }

        let n = &self.noise;
        if !(1..=MAX_PHOTONS).contains(&n.photons_per_setting) {
            bad(
                "noise.photons_per_setting",
                format!("must lie in [1, {MAX_PHOTONS}], got {}", n.photons_per_setting),
            );
        }
        for (key, v) in [("noise.dark_rate_hz", n.dark_rate_hz), ("noise.background_rate_hz", n.background_rate_hz)] {
            if !(v.is_finite() && v >= 0.0) {
                bad(key, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !(n.integration_s.is_finite() && n.integration_s > 0.0) {
            bad("noise.integration_s", format!("must be finite and > 0, got {}", n.integration_s));
        }
        if n.seed > i64::MAX as u64 {
            bad("noise.seed", format!("must be at most {}, got {}", i64::MAX, n.seed));
        }

        let o = &self.sorter;
        if o.grid_n < 64 || o.grid_n > 8192 || !o.grid_n.is_multiple_of(2) {
            bad("sorter.grid_n", format!("must be even and in [64, 8192], got {}", o.grid_n));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(o.wavelength_m.is_finite() && (1e-7..=1e-5).contains(&o.wavelength_m)) {
            bad("sorter.wavelength_m", format!("must lie in [1e-7, 1e-5] m, got {}", o.wavelength_m));
        }
        if !(positive(o.pitch_m) && o.pitch_m <= 1e-3) {
            bad("sorter.pitch_m", format!("must lie in (0, 1e-3] m, got {}", o.pitch_m));
        } else if o.pitch_m <= o.wavelength_m / 2.0 {
            bad("sorter.pitch_m", format!("must exceed half the wavelength, got {}", o.pitch_m));
        }
        if !positive(o.f_m) || o.f_m > 10.0 {
            bad("sorter.f_m", format!("must lie in (0, 10] m, got {}", o.f_m));
        }
        if !positive(o.waist_m) {
            bad("sorter.waist_m", format!("must be positive, got {}", o.waist_m));
        } else if positive(o.pitch_m) && o.grid_n > 0 {
            let extent = o.grid_n as f64 * o.pitch_m;
            if 2.0 * o.waist_m > 0.5 * extent {
                bad("sorter.waist_m", format!("ring of radius {} m does not fit the {extent} m window", o.waist_m));
            }
            let per_cycle = TAU * o.waist_m / o.pitch_m / s.l_max.max(1) as f64;
            if per_cycle < MIN_PIXELS_PER_CYCLE {
                bad(
                    "sorter.waist_m",
                    format!("ell = {} leaves {per_cycle:.1} pixels per azimuthal cycle", s.l_max),
                );
            }
        }
        for (key, v) in [("sorter.a_m", o.a_m), ("sorter.b_m", o.b_m), ("sorter.spacing_m", o.spacing_m), ("sorter.period_m", o.period_m)] {
            if let Some(v) = v {
                if !positive(v) {
                    bad(key, format!("must be positive when set, got {v}"));
                }
            }
        }
        if !(o.n_index > 1.0 && o.n_index < 2.0) {
            bad("sorter.n_index", format!("must lie in (1, 2), got {}", o.n_index));
        }
        if !(1..=16).contains(&o.relay_pad) {
            bad("sorter.relay_pad", format!("must lie in [1, 16], got {}", o.relay_pad));
        }
        if o.l2_pad < o.relay_pad || o.l2_pad > 64 {
            bad("sorter.l2_pad", format!("must lie in [relay_pad, 64], got {}", o.l2_pad));
        }
        if o.copies.is_multiple_of(2) || o.copies > 15 {
            bad("sorter.copies", format!("must be odd and at most 15, got {}", o.copies));
        }
        if !(o.uniformity_tol > 0.0 && o.uniformity_tol < 1.0) {
            bad("sorter.uniformity_tol", format!("must lie in (0, 1), got {}", o.uniformity_tol));
        }
        for (key, v) in [
            ("sorter.defocus_rad", o.defocus_rad),
            ("sorter.tilt_rad", o.tilt_rad),
            ("sorter.drift_tilt_rad", o.drift_tilt_rad),
        ] {
            if !v.is_finite() {
                bad(key, format!("must be finite, got {v}"));
            }
        }

        let w = &self.output;
        if w.directory.trim().is_empty() {
            bad("output.directory", "must not be empty".into());
        }
        if w.formats.is_empty() {
            bad("output.formats", "must list at least one format".into());
        }
        for (i, f) in w.formats.iter().enumerate() {
            if !KNOWN_FORMATS.contains(&f.as_str()) {
                bad(&format!("output.formats[{i}]"), format!("unknown format `{f}`, expected csv or json"));
            } else if w.formats[..i].contains(f) {
                bad(&format!("output.formats[{i}]"), format!("duplicate format `{f}`"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn unknown_key_names_its_table() {
        let err = ExperimentConfig::from_toml_str("[noise]\nphotons = 3\n").unwrap_err();
        match err {
            CliError::Config(issues) => {
                assert_eq!(issues.len(), 1);
                assert!(issues[0].key.starts_with("noise"), "{:?}", issues[0]);
                assert!(issues[0].message.contains("photons"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_carries_path() {
        let err = ExperimentConfig::from_toml_str("[measurement]\nruns = \"many\"\n").unwrap_err();
        let CliError::Config(issues) = err else { panic!() };
        assert_eq!(issues[0].key, "measurement.runs");
    }

    #[test]
    fn all_issues_reported() {
        let mut c = ExperimentConfig::default();
        c.measurement.alpha = -1.0;
        c.sorter.copies = 4;
        c.output.formats.push("xml".into());
        let CliError::Config(issues) = c.validate().unwrap_err() else { panic!() };
        let keys: Vec<_> = issues.iter().map(|i| i.key.as_str()).collect();
        assert_eq!(keys, ["measurement.alpha", "sorter.copies", "output.formats[2]"]);
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides {
            seed: Some(7),
            noiseless: true,
            out: Some("x".into()),
        });
        assert_eq!(c.noise.seed, 7);
        assert!(!c.noise.enabled);
        assert_eq!(c.output.directory, "x");
    }

    #[test]
    fn series_seeds_differ_in_high_bits() {
        let n = NoiseConfig {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(n.series_spec(0).seed, 5);
        assert_eq!(n.series_spec(2).seed, 5 | (2 << 48));
    }

    #[test]
    fn default_geometry_matches_sorter_defaults() {
        assert_eq!(SorterConfig::default().setup(), SorterSetup::default());
    }
}
