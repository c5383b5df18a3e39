//! Photon-counting readout of the pointer: a PBS with two single-photon detectors,
//! measured in a linear-diagonal and a circular analysis basis on disjoint ensembles.
//!
//! # Random streams
//!
//! Every Poisson draw comes from its own ChaCha20 stream. The key is the master
//! seed expanded by `ChaCha20Rng::seed_from_u64(seed)`; the 64-bit stream id is
//!
//! ```text
//! run << 32 | (ell + 32768) << 8 | basis << 2 | port << 1 | kind
//! ```
//!
//! with `basis` 0 = diagonal, 1 = circular; `port` 0 = plus, 1 = minus; and
//! `kind` 0 = signal photons, 1 = dark/background counts. Each stream is consumed
//! from word 0, so results do not depend on evaluation order.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::weak::{Pointer, PostSelected, WeakValueScan};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Photons sent per ell setting and per analysis basis.
    pub photons_per_setting: u64,
    /// Dark count rate of each detector, counts/s.
    pub dark_rate_hz: f64,
    /// Background light reaching each detector, counts/s.
    pub background_rate_hz: f64,
    pub integration_s: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            photons_per_setting: 100_000,
            dark_rate_hz: 100.0,
            background_rate_hz: 0.0,
            integration_s: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dark_rate_hz", self.dark_rate_hz),
            ("background_rate_hz", self.background_rate_hz),
            ("integration_s", self.integration_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Expected nuisance counts per detector.
    pub fn nuisance_mean(&self) -> f64 {
        (self.dark_rate_hz + self.background_rate_hz) * self.integration_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisBasis {
    /// `|±> = (H ± V)/√2`; the port difference measures σ1.
    LinearDiagonal,
    /// `|±> = (H ± iV)/√2`; the port difference measures σ2.
    Circular,
}

impl AnalysisBasis {
    pub const ALL: [AnalysisBasis; 2] = [AnalysisBasis::LinearDiagonal, AnalysisBasis::Circular];

    pub fn name(self) -> &'static str {
        match self {
            AnalysisBasis::LinearDiagonal => "linear-diagonal",
            AnalysisBasis::Circular => "circular",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear-diagonal" => Ok(AnalysisBasis::LinearDiagonal),
            "circular" => Ok(AnalysisBasis::Circular),
            other => Err(Error::Parse(format!("unknown analysis basis `{other}`"))),
        }
    }

    fn index(self) -> u64 {
        match self {
            AnalysisBasis::LinearDiagonal => 0,
            AnalysisBasis::Circular => 1,
        }
    }

    /// The two port states `(plus, minus)`.
    pub fn ports(self) -> (Pointer, Pointer) {
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let i = C64::new(0.0, FRAC_1_SQRT_2);
        match self {
            AnalysisBasis::LinearDiagonal => (Pointer::new(r, r), Pointer::new(r, -r)),
            AnalysisBasis::Circular => (Pointer::new(r, i), Pointer::new(r, -i)),
        }
    }

    /// `(p_plus, p_minus)` for a normalised pointer.
    pub fn port_probabilities(self, pointer: &Pointer) -> (f64, f64) {
        let proj = |port: Pointer| (port.h().conj() * pointer.h() + port.v().conj() * pointer.v()).norm_sqr();
        let (plus, minus) = self.ports();
        (proj(plus), proj(minus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountEntry {
    pub ell: i32,
    pub basis: AnalysisBasis,
    pub n_plus: u64,
    pub n_minus: u64,
    pub postsel_prob: f64,
}

/// Counts for every ell and both analysis bases, ordered by `(ell, basis)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub l_max: i32,
    pub entries: Vec<CountEntry>,
}

impl CountRecord {
    pub fn get(&self, ell: i32, basis: AnalysisBasis) -> Option<&CountEntry> {
        self.entries.iter().find(|e| e.ell == ell && e.basis == basis)
    }
}

fn stream_id(run: u64, ell: i32, basis: AnalysisBasis, port: u64, kind: u64) -> u64 {
    let ell_key = (ell as i64 + 32_768) as u64 & 0xFF_FFFF;
    (run << 32) | (ell_key << 8) | (basis.index() << 2) | (port << 1) | kind
}

fn poisson_draw(seed: u64, stream: u64, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(&mut rng) as u64
}

/// Simulates the detector counts of run 0.
pub fn simulate_counts(pointers: &[PostSelected], noise: &NoiseSpec) -> Result<CountRecord> {
    simulate_counts_run(pointers, noise, 0)
}

/// Simulates the counts of one repetition; `pointers` are indexed by ascending ell.
pub fn simulate_counts_run(pointers: &[PostSelected], noise: &NoiseSpec, run: u64) -> Result<CountRecord> {
    noise.validate()?;
    if pointers.len().is_multiple_of(2) {
        return Err(Error::domain(format!(
            "expected an odd number of ell settings, got {}",
            pointers.len()
        )));
    }
    let l_max = (pointers.len() / 2) as i32;
    let nuisance = noise.nuisance_mean();
    let mut entries = Vec::with_capacity(2 * pointers.len());
    for (ell, ps) in (-l_max..=l_max).zip(pointers) {
        let pointer = ps.pointer.normalized()?;
        for basis in AnalysisBasis::ALL {
            let (p_plus, p_minus) = basis.port_probabilities(&pointer);
            let signal = noise.photons_per_setting as f64 * ps.probability;
            let draw = |port: u64, p: f64| {
                poisson_draw(noise.seed, stream_id(run, ell, basis, port, 0), signal * p)
                    + poisson_draw(noise.seed, stream_id(run, ell, basis, port, 1), nuisance)
            };
            entries.push(CountEntry {
                ell,
                basis,
                n_plus: draw(0, p_plus),
                n_minus: draw(1, p_minus),
                postsel_prob: ps.probability,
            });
        }
    }
    Ok(CountRecord { l_max, entries })
}

/// A pointer expectation with its propagated standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

/// Estimated `<σ1>` and `<σ2>` for one ell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliEstimate {
    pub ell: i32,
    pub sigma1: Estimate,
    pub sigma2: Estimate,
}

/// Bias-corrected normalised port difference with Poisson error propagation.
///
/// `σ = (n₊ − n₋)/(n₊ + n₋ − 2b)`; the expected nuisance `b` cancels in the
/// numerator. Each port count is treated as an independent Poisson variable
/// with variance equal to its observed value.
pub fn port_contrast(n_plus: u64, n_minus: u64, bias: f64) -> Option<Estimate> {
    let (np, nm) = (n_plus as f64, n_minus as f64);
    let total = np + nm - 2.0 * bias;
    if !(total > 0.0) {
        return None;
    }
    let value = (np - nm) / total;
    // dσ/dn₊ = 2(n₋ − b)/S², dσ/dn₋ = −2(n₊ − b)/S²
    let (sp, sm) = (np - bias, nm - bias);
    let var = 4.0 * (sm * sm * np + sp * sp * nm) / total.powi(4);
    Some(Estimate {
        value,
        err: var.sqrt(),
    })
}

/// Per-ell Pauli estimates from a count record.
pub fn estimate_pauli(record: &CountRecord, noise: &NoiseSpec) -> Result<Vec<PauliEstimate>> {
    let bias = noise.nuisance_mean();
    (-record.l_max..=record.l_max)
        .map(|ell| {
            let mut est = [Estimate { value: 0.0, err: 0.0 }; 2];
            for (slot, basis) in AnalysisBasis::ALL.into_iter().enumerate() {
                let e = record
                    .get(ell, basis)
                    .ok_or_else(|| Error::domain(format!("missing counts for ell = {ell}, {}", basis.name())))?;
                est[slot] = port_contrast(e.n_plus, e.n_minus, bias).ok_or(Error::InsufficientSignal {
                    ell,
                    basis: basis.name(),
                    total: e.n_plus as f64 + e.n_minus as f64 - 2.0 * bias,
                })?;
            }
            Ok(PauliEstimate {
                ell,
                sigma1: est[0],
                sigma2: est[1],
            })
        })
        .collect()
}

/// Inverts Pauli estimates into a weak-value scan with propagated errors.
pub fn scan_from_estimates(l_max: i32, alpha: f64, estimates: &[PauliEstimate]) -> Result<WeakValueScan> {
    WeakValueScan::from_pauli(
        l_max,
        alpha,
        estimates.iter().map(|e| e.sigma1.value).collect(),
        estimates.iter().map(|e| e.sigma2.value).collect(),
        estimates.iter().map(|e| e.sigma1.err).collect(),
        estimates.iter().map(|e| e.sigma2.err).collect(),
    )
}

/// One noisy repetition: counts, Pauli estimates, weak values.
pub fn noisy_scan(
    pointers: &[PostSelected],
    alpha: f64,
    noise: &NoiseSpec,
    run: u64,
) -> Result<(CountRecord, WeakValueScan)> {
    let record = simulate_counts_run(pointers, noise, run)?;
    let est = estimate_pauli(&record, noise)?;
    let scan = scan_from_estimates(record.l_max, alpha, &est)?;
    Ok((record, scan))
}

/// Per-ell mean of the runs; uncertainties become the standard error of the mean.
pub fn average_runs(scans: &[WeakValueScan]) -> Result<WeakValueScan> {
    let first = scans
        .first()
        .ok_or_else(|| Error::domain("cannot average an empty set of scans"))?;
    let d = first.dim();
    if let Some(bad) = scans.iter().find(|s| s.dim() != d || s.l_max != first.l_max) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let n = scans.len() as f64;
    let mean_sem = |get: &dyn Fn(&WeakValueScan) -> f64| {
        let mean = scans.iter().map(get).sum::<f64>() / n;
        if scans.len() < 2 {
            return (mean, 0.0);
        }
        let var = scans.iter().map(|s| (get(s) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };

    let mut out = first.clone();
    for i in 0..d {
        let (re, err_re) = mean_sem(&|s| s.values[i].re);
        let (im, err_im) = mean_sem(&|s| s.values[i].im);
        out.values[i] = C64::new(re, im);
        out.err_re[i] = err_re;
        out.err_im[i] = err_im;
        out.sigma1[i] = mean_sem(&|s| s.sigma1[i]).0;
        out.sigma2[i] = mean_sem(&|s| s.sigma2[i]).0;
    }
    Ok(out)
}
