//! CSV/JSON readers and writers. All files are UTF-8 with LF line endings and a
//! mandatory header row; rows are ordered by ascending `ell`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::{FitResult, ReconstructedState};
use crate::detection::{AnalysisBasis, CountEntry, CountRecord};
use crate::state::OamState;
use crate::weak::WeakValueScan;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct StateRow {
    ell: i32,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanRow {
    ell: i32,
    re_w: f64,
    im_w: f64,
    sigma1: f64,
    sigma2: f64,
    err_re: f64,
    err_im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    ell: i32,
    basis: String,
    n_plus: u64,
    n_minus: u64,
    postsel_prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReconstructionRow {
    ell: i32,
    prob: f64,
    prob_err: f64,
    phase: f64,
    phase_err: f64,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// Checks that rows cover `-L..=L` in ascending order and returns `L`.
fn check_ells(ells: &[i32]) -> Result<i32> {
    if ells.is_empty() || ells.len().is_multiple_of(2) {
        return Err(Error::Parse(format!("expected an odd, nonzero number of rows, got {}", ells.len())));
    }
    let l_max = (ells.len() / 2) as i32;
    for (i, &ell) in ells.iter().enumerate() {
        if ell != i as i32 - l_max {
            return Err(Error::Parse(format!("row {i}: expected ell = {}, found {ell}", i as i32 - l_max)));
        }
    }
    Ok(l_max)
}

pub fn write_state<W: Write>(out: W, state: &OamState) -> Result<()> {
    write_rows(out, state.iter().map(|(ell, a)| StateRow { ell, re: a.re, im: a.im }))
}

pub fn read_state<R: Read>(input: R) -> Result<OamState> {
    let rows: Vec<StateRow> = read_rows(input)?;
    let l_max = check_ells(&rows.iter().map(|r| r.ell).collect::<Vec<_>>())?;
    OamState::from_amplitudes(l_max, rows.iter().map(|r| C64::new(r.re, r.im)).collect())
}

pub fn write_scan<W: Write>(out: W, scan: &WeakValueScan) -> Result<()> {
    write_rows(
        out,
        scan.ells().enumerate().map(|(i, ell)| ScanRow {
            ell,
            re_w: scan.values[i].re,
            im_w: scan.values[i].im,
            sigma1: scan.sigma1[i],
            sigma2: scan.sigma2[i],
            err_re: scan.err_re[i],
            err_im: scan.err_im[i],
        }),
    )
}

/// Reads a scan; `alpha` is not stored in the file and must be supplied.
pub fn read_scan<R: Read>(input: R, alpha: f64) -> Result<WeakValueScan> {
    let rows: Vec<ScanRow> = read_rows(input)?;
    let l_max = check_ells(&rows.iter().map(|r| r.ell).collect::<Vec<_>>())?;
    Ok(WeakValueScan {
        l_max,
        alpha,
        values: rows.iter().map(|r| C64::new(r.re_w, r.im_w)).collect(),
        sigma1: rows.iter().map(|r| r.sigma1).collect(),
        sigma2: rows.iter().map(|r| r.sigma2).collect(),
        err_re: rows.iter().map(|r| r.err_re).collect(),
        err_im: rows.iter().map(|r| r.err_im).collect(),
    })
}

pub fn write_counts<W: Write>(out: W, record: &CountRecord) -> Result<()> {
    write_rows(
        out,
        record.entries.iter().map(|e| CountRow {
            ell: e.ell,
            basis: e.basis.name().to_string(),
            n_plus: e.n_plus,
            n_minus: e.n_minus,
            postsel_prob: e.postsel_prob,
        }),
    )
}

pub fn read_counts<R: Read>(input: R) -> Result<CountRecord> {
    let rows: Vec<CountRow> = read_rows(input)?;
    let entries = rows
        .into_iter()
        .map(|r| {
            Ok(CountEntry {
                ell: r.ell,
                basis: AnalysisBasis::parse(&r.basis)?,
                n_plus: r.n_plus,
                n_minus: r.n_minus,
                postsel_prob: r.postsel_prob,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let l_max = entries.iter().map(|e| e.ell.abs()).max().unwrap_or(0);
    Ok(CountRecord { l_max, entries })
}

pub fn write_reconstruction<W: Write>(out: W, rec: &ReconstructedState) -> Result<()> {
    write_rows(
        out,
        rec.ells().enumerate().map(|(i, ell)| ReconstructionRow {
            ell,
            prob: rec.prob[i],
            prob_err: rec.prob_err[i],
            phase: rec.phase[i],
            phase_err: rec.phase_err[i],
        }),
    )
}

/// Reads a reconstruction. The state is rebuilt from `sqrt(prob)·exp(i·phase)`.
pub fn read_reconstruction<R: Read>(input: R) -> Result<ReconstructedState> {
    let rows: Vec<ReconstructionRow> = read_rows(input)?;
    let l_max = check_ells(&rows.iter().map(|r| r.ell).collect::<Vec<_>>())?;
    let state = OamState::from_amplitudes(
        l_max,
        rows.iter().map(|r| C64::from_polar(r.prob.max(0.0).sqrt(), r.phase)).collect(),
    )?;
    Ok(ReconstructedState {
        state,
        prob: rows.iter().map(|r| r.prob).collect(),
        prob_err: rows.iter().map(|r| r.prob_err).collect(),
        phase: rows.iter().map(|r| r.phase).collect(),
        phase_err: rows.iter().map(|r| r.phase_err).collect(),
    })
}

/// `{name: FitResult}` as pretty JSON with a trailing newline.
pub fn write_fits<W: Write>(mut out: W, fits: &BTreeMap<String, FitResult>) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, fits).map_err(|e| Error::Parse(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_fits<R: Read>(input: R) -> Result<BTreeMap<String, FitResult>> {
    serde_json::from_reader(input).map_err(|e| Error::Parse(e.to_string()))
}

/// Convenience: create `path` and hand the file to `f`.
pub fn with_file<T>(path: impl AsRef<Path>, f: impl FnOnce(File) -> Result<T>) -> Result<T> {
    f(File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fit_sinc_squared, renormalize_scan};
    use crate::detection::{simulate_counts, NoiseSpec};
    use crate::state::{aperture_state, rotate_state};
    use crate::weak::{direct_measure, pointer_scan};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn state_csv_layout() {
        let s = OamState::basis(1, -1).unwrap();
        let mut buf = Vec::new();
        write_state(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ell,re,im\n-1,1.0,0.0\n0,0.0,0.0\n1,0.0,0.0\n");
    }

    #[test]
    fn state_csv_rejects_gaps() {
        let bad = "ell,re,im\n-1,1,0\n1,0,0\n0,0,0\n";
        assert!(matches!(read_state(bad.as_bytes()), Err(Error::Parse(_))));
        assert!(read_state("ell,re\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn scan_and_counts_headers() {
        let s = aperture_state(TAU / 9.0, 13).unwrap();
        let scan = direct_measure(&s, PI / 9.0, 0).unwrap();
        let mut buf = Vec::new();
        write_scan(&mut buf, &scan).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ell,re_w,im_w,sigma1,sigma2,err_re,err_im\n-13,"));
        assert!(!text.contains('\r'));
        let back = read_scan(text.as_bytes(), PI / 9.0).unwrap();
        assert_eq!(back, scan);

        let rec = simulate_counts(&pointer_scan(&s, PI / 9.0, 0).unwrap(), &NoiseSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_counts(&mut buf, &rec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ell,basis,n_plus,n_minus,postsel_prob\n-13,linear-diagonal,"));
        assert_eq!(read_counts(text.as_bytes()).unwrap(), rec);
    }

    #[test]
    fn reconstruction_and_fit_json() {
        let s = aperture_state(TAU / 9.0, 13).unwrap();
        let rec = renormalize_scan(&direct_measure(&s, PI / 9.0, 0).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_reconstruction(&mut buf, &rec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ell,prob,prob_err,phase,phase_err\n"));
        let back = read_reconstruction(text.as_bytes()).unwrap();
        assert_eq!(back.prob, rec.prob);

        let fit = fit_sinc_squared(&rec.density_series()).unwrap();
        let fits = BTreeMap::from([("density".to_string(), fit)]);
        let mut buf = Vec::new();
        write_fits(&mut buf, &fits).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(json["density"]["model"], "sinc-squared");
        assert!(json["density"]["params"]["width"]["value"].is_f64());
        assert!(json["density"]["params"]["width"]["err"].is_f64());
        assert!(json["density"]["chi2"].is_f64());
        assert_eq!(json["density"]["dof"], 25);
        assert_eq!(read_fits(buf.as_slice()).unwrap(), fits);
    }

    proptest! {
        #[test]
        fn state_csv_round_trips(theta in -PI..PI, width in 0.3f64..TAU) {
            let s = rotate_state(&aperture_state(width, 13).unwrap(), theta);
            let mut buf = Vec::new();
            write_state(&mut buf, &s).unwrap();
            prop_assert_eq!(read_state(buf.as_slice()).unwrap(), s);
        }
    }
}
