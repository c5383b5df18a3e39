//! Monte Carlo checks of the counting estimators and the weak-limit behaviour.

use std::f64::consts::{PI, TAU};

use oamdm_core::detection::{average_runs, estimate_pauli, noisy_scan, simulate_counts, NoiseSpec};
use oamdm_core::state::aperture_state;
use oamdm_core::weak::{direct_measure, pauli_expectations, pointer_scan};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn sigma1_estimate_is_unbiased_over_many_seeds() {
    let state = aperture_state(TAU / 9.0, 13).unwrap();
    let pointers = pointer_scan(&state, PI / 9.0, 0).unwrap();
    let truth = pauli_expectations(&pointers[13].pointer).unwrap().sigma1;
    let estimates: Vec<f64> = (0..10_000u64)
        .map(|seed| {
            let noise = NoiseSpec {
                photons_per_setting: 10_000,
                seed,
                ..NoiseSpec::default()
            };
            let record = simulate_counts(&pointers, &noise).unwrap();
            estimate_pauli(&record, &noise).unwrap()[13].sigma1.value
        })
        .collect();
    let (mean, se) = mean_and_se(&estimates);
    assert!((mean - truth).abs() < 3.0 * se, "mean {mean} truth {truth} se {se}");
}

#[test]
fn run_average_error_shrinks_as_inverse_root_runs() {
    let state = aperture_state(TAU / 9.0, 13).unwrap();
    let pointers = pointer_scan(&state, PI / 9.0, 0).unwrap();
    let noise = NoiseSpec {
        seed: 11,
        ..NoiseSpec::default()
    };
    let runs: Vec<_> = (0..50).map(|r| noisy_scan(&pointers, PI / 9.0, &noise, r).unwrap().1).collect();
    let avg = average_runs(&runs).unwrap();
    // the sample SEM over 50 runs scatters by ~10%; pool over modes
    let ratios: Vec<f64> = (0..avg.dim())
        .map(|i| avg.err_re[i] * 50f64.sqrt() / runs[0].err_re[i])
        .collect();
    let (mean, _) = mean_and_se(&ratios);
    assert!((mean - 1.0).abs() < 0.1, "pooled ratio {mean}");
    for r in &ratios {
        assert!((0.6..1.4).contains(r), "ratio {r}");
    }
}

#[test]
fn extracted_weak_values_converge_at_least_linearly_in_alpha() {
    let state = aperture_state(TAU / 9.0, 13).unwrap();
    let limit = direct_measure(&state, 1e-6, 0).unwrap();
    let alphas: Vec<f64> = (0..4).map(|k| PI / 9.0 / 2f64.powi(k)).collect();
    let errs: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            let scan = direct_measure(&state, a, 0).unwrap();
            scan.values
                .iter()
                .zip(&limit.values)
                .map(|(w, w0)| (w - w0).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    for pair in errs.windows(2) {
        assert!(pair[1] < pair[0], "{errs:?}");
    }
    let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope >= 1.0, "log-log slope {slope}");
}
