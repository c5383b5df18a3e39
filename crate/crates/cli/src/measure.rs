//! prepare → weak measurement → detection → reconstruction → fits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use oamdm_core::analysis::{
    apply_mask, delta_phase, detect_pi_jumps, fit_phase_linear_chi2, fit_phase_quadratic, fit_sinc_squared,
    renormalize_scan, without_fixed_points, FitResult, ReconstructedState, NULL_FRACTION, PI_JUMP_TOL,
};
use oamdm_core::detection::{average_runs, noisy_scan, CountRecord};
use oamdm_core::state::{aperture_state, fidelity, rotate_state, OamState};
use oamdm_core::weak::{direct_measure, pointer_scan, WeakValueScan};
use oamdm_core::{io, C64};
use oamdm_optics::misalign::Misalignment;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{BundleWriter, Manifest, CONFIG};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const REFERENCE_LABEL: &str = "unrotated";
pub const SUMMARY: &str = "summary.json";
pub const FITS: &str = "fits.json";
pub const RUN_LOG: &str = "run.log";

/// Series label for an aperture rotation, e.g. `theta+0.3491`.
pub fn series_label(theta0: f64) -> String {
    if theta0 == 0.0 {
        REFERENCE_LABEL.to_string()
    } else {
        format!("theta{theta0:+.4}")
    }
}

pub fn reconstruction_file(label: &str) -> String {
    format!("reconstruction_{label}.csv")
}

pub fn scan_file(label: &str) -> String {
    format!("scan_{label}.csv")
}

pub fn counts_file(label: &str) -> String {
    format!("counts_{label}.csv")
}

pub fn delta_fit_key(label: &str) -> String {
    format!("delta_phase_{label}")
}

/// One measured aperture orientation.
#[derive(Debug, Clone)]
pub struct SeriesOutcome {
    pub label: String,
    pub theta0: f64,
    /// The ideal state fed to the apparatus, before any misalignment phase.
    pub prepared: OamState,
    /// Per-run counts and weak values; empty in noiseless mode.
    pub runs: Vec<(CountRecord, WeakValueScan)>,
    /// Run average (or the exact expectation when noiseless).
    pub scan: WeakValueScan,
    pub reconstruction: ReconstructedState,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub label: String,
    pub theta0: f64,
    pub fidelity: f64,
    pub null_modes: BTreeSet<i32>,
    pub pi_jumps: BTreeSet<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSummary {
    pub noise_enabled: bool,
    pub seed: u64,
    pub runs: usize,
    pub reference: String,
    pub series: Vec<SeriesSummary>,
}

#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub series: Vec<SeriesOutcome>,
    /// `density`, `phase`, and `delta_phase_<label>` for each rotated series.
    pub fits: BTreeMap<String, FitResult>,
    pub summary: MeasurementSummary,
}

impl MeasurementOutcome {
    pub fn reference(&self) -> &SeriesOutcome {
        self.series
            .iter()
            .find(|s| s.label == REFERENCE_LABEL)
            .expect("validated config includes the reference")
    }

    pub fn series(&self, label: &str) -> Option<&SeriesOutcome> {
        self.series.iter().find(|s| s.label == label)
    }

    pub fn width(&self) -> f64 {
        self.fits["density"].param("width").map_or(f64::NAN, |p| p.value)
    }

    pub fn slope(&self, label: &str) -> Option<f64> {
        self.fits.get(&delta_fit_key(label))?.param("slope").map(|p| p.value)
    }
}

fn with_phase(state: &OamState, mis: &Misalignment) -> Result<OamState> {
    if mis.is_zero() {
        return Ok(state.clone());
    }
    Ok(OamState::from_fn(state.l_max(), |ell| {
        state.amplitude(ell).unwrap_or_default() * C64::from_polar(1.0, mis.phase(ell))
    })?)
}

fn measure_series(config: &ExperimentConfig, k: usize) -> Result<SeriesOutcome> {
    let s = &config.state;
    let m = &config.measurement;
    let theta0 = s.theta0[k];
    let prepared = rotate_state(&aperture_state(s.delta_theta, s.l_max)?, theta0);
    let mis = if theta0 == 0.0 {
        config.sorter.misalignment()
    } else {
        config.sorter.rotated_misalignment()
    };
    let incident = with_phase(&prepared, &mis)?;

    let (runs, scan) = if config.noise.enabled {
        let noise = config.noise.series_spec(k);
        let pointers = pointer_scan(&incident, m.alpha, m.theta_index)?;
        let runs = (0..m.runs as u64)
            .into_par_iter()
            .map(|r| noisy_scan(&pointers, m.alpha, &noise, r))
            .collect::<oamdm_core::Result<Vec<_>>>()?;
        let scan = if runs.len() == 1 {
            runs[0].1.clone()
        } else {
            let scans: Vec<WeakValueScan> = runs.iter().map(|(_, s)| s.clone()).collect();
            average_runs(&scans)?
        };
        (runs, scan)
    } else {
        (Vec::new(), direct_measure(&incident, m.alpha, m.theta_index)?)
    };
    let reconstruction = renormalize_scan(&scan)?;
    let fidelity = fidelity(&reconstruction.state, &prepared)?;
    Ok(SeriesOutcome {
        label: series_label(theta0),
        theta0,
        prepared,
        runs,
        scan,
        reconstruction,
        fidelity,
    })
}

/// Fits for a reference reconstruction and any number of rotated ones.
pub fn fit_series(reference: &ReconstructedState, rotated: &[(&str, &ReconstructedState)]) -> Result<BTreeMap<String, FitResult>> {
    let mut fits = BTreeMap::new();
    let nulls = reference.null_modes(NULL_FRACTION);
    fits.insert("density".into(), fit_sinc_squared(&reference.density_series())?);
    fits.insert("phase".into(), fit_phase_quadratic(&without_fixed_points(&apply_mask(&reference.phase_series(), &nulls)))?);
    for (label, rec) in rotated {
        let mask: BTreeSet<i32> = nulls.union(&rec.null_modes(NULL_FRACTION)).copied().collect();
        let dphi = delta_phase(rec, reference)?;
        fits.insert(delta_fit_key(label), fit_phase_linear_chi2(&without_fixed_points(&apply_mask(&dphi, &mask)))?);
    }
    Ok(fits)
}

/// Runs the full pipeline in memory. The config must already be validated.
pub fn measure(config: &ExperimentConfig) -> Result<MeasurementOutcome> {
    let series = (0..config.state.theta0.len())
        .map(|k| measure_series(config, k))
        .collect::<Result<Vec<_>>>()?;
    let reference = &series[config.reference_index()];
    let rotated: Vec<(&str, &ReconstructedState)> = series
        .iter()
        .filter(|s| s.theta0 != 0.0)
        .map(|s| (s.label.as_str(), &s.reconstruction))
        .collect();
    let fits = fit_series(&reference.reconstruction, &rotated)?;
    let summary = MeasurementSummary {
        noise_enabled: config.noise.enabled,
        seed: config.noise.seed,
        runs: if config.noise.enabled { config.measurement.runs } else { 0 },
        reference: REFERENCE_LABEL.into(),
        series: series
            .iter()
            .map(|s| SeriesSummary {
                label: s.label.clone(),
                theta0: s.theta0,
                fidelity: s.fidelity,
                null_modes: s.reconstruction.null_modes(NULL_FRACTION),
                pi_jumps: detect_pi_jumps(&s.reconstruction, PI_JUMP_TOL),
            })
            .collect(),
    };
    Ok(MeasurementOutcome { series, fits, summary })
}

fn write_counts_long(out: &mut Vec<u8>, runs: &[(CountRecord, WeakValueScan)]) -> Result<()> {
    writeln!(out, "run,ell,basis,n_plus,n_minus,postsel_prob").expect("in-memory write");
    for (r, (record, _)) in runs.iter().enumerate() {
        let mut body = Vec::new();
        io::write_counts(&mut body, record)?;
        let text = String::from_utf8(body).expect("csv output is UTF-8");
        for line in text.lines().skip(1) {
            writeln!(out, "{r},{line}").expect("in-memory write");
        }
    }
    Ok(())
}

fn log_lines(config: &ExperimentConfig, outcome: &MeasurementOutcome) -> String {
    let mut log = String::new();
    let mut line = |s: String| {
        log.push_str(&s);
        log.push('\n');
    };
    line(format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
    line(format!(
        "state: delta_theta={} l_max={} rotations={}",
        config.state.delta_theta,
        config.state.l_max,
        config.state.theta0.len()
    ));
    line(format!(
        "measurement: alpha={} theta_index={} runs={} noise={} seed={}",
        config.measurement.alpha,
        config.measurement.theta_index,
        outcome.summary.runs,
        if config.noise.enabled { "on" } else { "off" },
        config.noise.seed
    ));
    for s in &outcome.summary.series {
        line(format!(
            "series {}: theta0={} fidelity={:.6} pi_jumps={:?} null_modes={:?}",
            s.label, s.theta0, s.fidelity, s.pi_jumps, s.null_modes
        ));
    }
    for (name, fit) in &outcome.fits {
        let params: Vec<String> = fit
            .params
            .iter()
            .map(|(k, p)| format!("{k}={:.6}±{:.6}", p.value, p.err))
            .collect();
        line(format!(
            "fit {name} ({}): {} chi2={:.4} dof={}",
            fit.model.name(),
            params.join(" "),
            fit.chi2,
            fit.dof
        ));
    }
    log
}

/// Validates, runs and writes the measurement bundle into `output.directory`.
pub fn run_direct_measurement(config: &ExperimentConfig) -> Result<(MeasurementOutcome, Manifest)> {
    config.validate()?;
    let outcome = measure(config)?;
    let mut bundle = BundleWriter::create(&config.output.directory)?;
    write_measurement(&mut bundle, config, &outcome)?;
    let manifest = bundle.finish("measure")?;
    Ok((outcome, manifest))
}

pub fn write_measurement(bundle: &mut BundleWriter, config: &ExperimentConfig, outcome: &MeasurementOutcome) -> Result<()> {
    bundle.write(CONFIG, config.to_toml_string()?.as_bytes())?;
    if config.output.wants("csv") {
        for s in &outcome.series {
            bundle.write_with(&reconstruction_file(&s.label), |b| io::write_reconstruction(b, &s.reconstruction))?;
            bundle.write_with(&scan_file(&s.label), |b| io::write_scan(b, &s.scan))?;
            if !s.runs.is_empty() {
                bundle.write_with(&counts_file(&s.label), |b| write_counts_long(b, &s.runs))?;
            }
        }
    }
    if config.output.wants("json") {
        bundle.write_with(FITS, |b| io::write_fits(b, &outcome.fits))?;
        bundle.write_json(SUMMARY, &outcome.summary)?;
    }
    bundle.write(RUN_LOG, log_lines(config, outcome).as_bytes())
}

/// Re-runs the config stored in `bundle` (checked against its manifest hash),
/// writing into `out`.
pub fn rerun_from_manifest(bundle: &Path, out: &Path) -> Result<(MeasurementOutcome, Manifest)> {
    let manifest = crate::bundle::read_manifest(bundle)?;
    let path = bundle.join(&manifest.config);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    if crate::bundle::sha256_hex(text.as_bytes()) != manifest.config_sha256 {
        return Err(CliError::Malformed {
            path,
            message: "config hash does not match the manifest".into(),
        });
    }
    let mut config = ExperimentConfig::from_toml_str(&text)?;
    config.output.directory = out.display().to_string();
    run_direct_measurement(&config)
}
