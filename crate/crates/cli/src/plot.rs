//! Long-format plot tables (`x,y,yerr,series`) built from a measurement bundle.
//!
//! For every series `<label>` listed in `summary.json`:
//!
//! | file                       | content                                        |
//! |----------------------------|------------------------------------------------|
//! | `amplitude_<label>.csv`    | `Re a` and `Im a` of the reconstructed state   |
//! | `density_<label>.csv`      | `|a|²`, summing to one                         |
//! | `phase_<label>.csv`        | principal phase                                |
//! | `delta_phase_<label>.csv`  | rotated series only: phase minus the reference |
//!
//! Fitted curves go into `*_fit.csv` companions sampled every 0.1 mode.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use oamdm_core::analysis::{delta_phase, unwrap_phase, DataPoint, FitResult, ReconstructedState};
use oamdm_core::io;

use crate::bundle::BundleWriter;
use crate::error::{CliError, Result};
use crate::measure::{delta_fit_key, reconstruction_file, MeasurementSummary, FITS, REFERENCE_LABEL, SUMMARY};

pub const HEADER: &str = "x,y,yerr,series";
const FIT_STEP: f64 = 0.1;

/// One row of a panel table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub x: f64,
    pub y: f64,
    pub yerr: f64,
    pub series: String,
}

pub fn render(rows: &[PlotRow]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{},{},{}", r.x, r.y, r.yerr, r.series).expect("writing to a String");
    }
    s
}

fn open(path: PathBuf) -> Result<File> {
    File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path),
        _ => CliError::io(path, e),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<T> {
    let f = open(path.clone())?;
    serde_json::from_reader(f).map_err(|e| CliError::Malformed {
        path,
        message: e.to_string(),
    })
}

pub fn amplitude_rows(rec: &ReconstructedState) -> Vec<PlotRow> {
    let mut re = Vec::new();
    let mut im = Vec::new();
    for (i, ell) in rec.ells().enumerate() {
        let (p, dp, phi, dphi) = (rec.prob[i], rec.prob_err[i], rec.phase[i], rec.phase_err[i]);
        let mag = p.max(0.0).sqrt();
        let dmag = if mag > 0.0 { dp / (2.0 * mag) } else { dp.sqrt() };
        let (s, c) = phi.sin_cos();
        let x = ell as f64;
        re.push(PlotRow {
            x,
            y: mag * c,
            yerr: (c * dmag).hypot(mag * s * dphi),
            series: "re".into(),
        });
        im.push(PlotRow {
            x,
            y: mag * s,
            yerr: (s * dmag).hypot(mag * c * dphi),
            series: "im".into(),
        });
    }
    re.extend(im);
    re
}

fn points_rows(points: &[DataPoint], series: &str) -> Vec<PlotRow> {
    points
        .iter()
        .map(|p| PlotRow {
            x: p.x,
            y: p.y,
            yerr: p.err,
            series: series.into(),
        })
        .collect()
}

pub fn fit_rows(fit: &FitResult, l_max: i32) -> Vec<PlotRow> {
    let steps = (2.0 * l_max as f64 / FIT_STEP).round() as i64;
    (0..=steps)
        .map(|k| {
            let x = -l_max as f64 + k as f64 * FIT_STEP;
            PlotRow {
                x,
                y: fit.evaluate(x),
                yerr: 0.0,
                series: fit.model.name().into(),
            }
        })
        .collect()
}

/// Phase difference to the reference, unwrapped along `ell` from `ell = 0`.
pub fn delta_phase_rows(rotated: &ReconstructedState, reference: &ReconstructedState) -> Result<Vec<PlotRow>> {
    Ok(points_rows(&unwrap_phase(&delta_phase(rotated, reference)?, TAU), "measured"))
}

/// Reads a measurement bundle and returns `file name -> table text`.
pub fn plot_tables(bundle: &Path) -> Result<BTreeMap<String, String>> {
    let summary: MeasurementSummary = read_json(bundle.join(SUMMARY))?;
    let fits: BTreeMap<String, FitResult> = {
        let path = bundle.join(FITS);
        io::read_fits(open(path.clone())?).map_err(|e| CliError::Malformed {
            path,
            message: e.to_string(),
        })?
    };
    let fit = |key: &str| {
        fits.get(key)
            .ok_or_else(|| CliError::Malformed {
                path: bundle.join(FITS),
                message: format!("no `{key}` entry"),
            })
    };
    let mut recs = BTreeMap::new();
    for s in &summary.series {
        let path = bundle.join(reconstruction_file(&s.label));
        let rec = io::read_reconstruction(open(path.clone())?).map_err(|e| CliError::Malformed {
            path,
            message: e.to_string(),
        })?;
        recs.insert(s.label.clone(), rec);
    }
    let reference = recs.get(REFERENCE_LABEL).ok_or_else(|| {
        CliError::MissingInput(bundle.join(reconstruction_file(REFERENCE_LABEL)))
    })?;
    let l_max = reference.l_max();

    let mut out = BTreeMap::new();
    for s in &summary.series {
        let rec = &recs[&s.label];
        let label = &s.label;
        out.insert(format!("amplitude_{label}.csv"), render(&amplitude_rows(rec)));
        out.insert(format!("density_{label}.csv"), render(&points_rows(&rec.density_series(), "measured")));
        out.insert(format!("phase_{label}.csv"), render(&points_rows(&rec.phase_series(), "measured")));
        if label == REFERENCE_LABEL {
            out.insert(format!("density_{label}_fit.csv"), render(&fit_rows(fit("density")?, l_max)));
            out.insert(format!("phase_{label}_fit.csv"), render(&fit_rows(fit("phase")?, l_max)));
        } else {
            out.insert(format!("delta_phase_{label}.csv"), render(&delta_phase_rows(rec, reference)?));
            out.insert(
                format!("delta_phase_{label}_fit.csv"),
                render(&fit_rows(fit(&delta_fit_key(label))?, l_max)),
            );
        }
    }
    Ok(out)
}

/// Writes the plot tables into `out`, creating it if needed.
pub fn emit_plot_data(bundle: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let tables = plot_tables(bundle)?;
    let mut w = BundleWriter::create(out)?;
    let mut written = Vec::new();
    for (name, text) in &tables {
        w.write(name, text.as_bytes())?;
        written.push(w.path(name));
    }
    Ok(written)
}
