//! Phase-mask and crosstalk writers.
//!
//! A mask is a raw little-endian `f32` array in row-major order, next to a JSON
//! sidecar with the sampling and a description.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sorter::{CrosstalkReport, PhaseMask};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub pitch_m: f64,
    pub wavelength_m: f64,
    pub description: String,
    /// `[rows, cols]`
    pub shape: [usize; 2],
}

/// Writes `<stem>.f32` and `<stem>.json`; returns both paths.
pub fn write_mask(stem: impl AsRef<Path>, mask: &PhaseMask, description: &str) -> Result<(PathBuf, PathBuf)> {
    let stem = stem.as_ref();
    let raw = stem.with_extension("f32");
    let meta = stem.with_extension("json");
    let mut bytes = Vec::with_capacity(mask.phase.len() * 4);
    for (&p, &b) in mask.phase.iter().zip(&mask.blocked) {
        let v = if b { 0.0 } else { p as f32 };
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw, bytes)?;
    let sidecar = MaskSidecar {
        pitch_m: mask.grid.pitch,
        wavelength_m: mask.grid.wavelength,
        description: description.to_string(),
        shape: [mask.grid.n, mask.grid.n],
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&meta, text)?;
    Ok((raw, meta))
}

pub fn read_mask(stem: impl AsRef<Path>) -> Result<(Vec<f32>, MaskSidecar)> {
    let stem = stem.as_ref();
    let sidecar: MaskSidecar = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    let values = fs::read(stem.with_extension("f32"))?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((values, sidecar))
}

/// Header `ell,<ell'>...`, one row per source mode.
pub fn write_crosstalk_csv<W: Write>(out: W, report: &CrosstalkReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["ell".to_string()];
    header.extend(report.ells.iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for (ell, row) in report.ells.iter().zip(&report.matrix) {
        let mut rec = vec![ell.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
