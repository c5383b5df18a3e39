//! Re-fits a reconstruction CSV with a model picked from the fit registry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use oamdm_core::analysis::{
    apply_mask, delta_phase, without_fixed_points, FitRegistry, FitResult, FitTarget, ReconstructedState, NULL_FRACTION,
};
use oamdm_core::io;

use crate::error::{CliError, Result};

pub fn load_reconstruction(path: &Path) -> Result<ReconstructedState> {
    let f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
        _ => CliError::io(path, e),
    })?;
    io::read_reconstruction(f).map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Fits `model` to the quantity it targets. Phase models skip modes below the
/// null threshold; the phase-difference model needs a reference.
pub fn refit(
    registry: &FitRegistry,
    model: &str,
    input: &ReconstructedState,
    reference: Option<&ReconstructedState>,
) -> Result<FitResult> {
    let m = registry.get(model)?;
    let data = match m.target() {
        FitTarget::Density => input.density_series(),
        FitTarget::Phase => apply_mask(&input.phase_series(), &input.null_modes(NULL_FRACTION)),
        FitTarget::PhaseDifference => {
            let reference = reference.ok_or_else(|| {
                CliError::config("--reference", format!("model `{model}` fits a phase difference and needs a reference"))
            })?;
            let mask: BTreeSet<i32> = input
                .null_modes(NULL_FRACTION)
                .union(&reference.null_modes(NULL_FRACTION))
                .copied()
                .collect();
            apply_mask(&delta_phase(input, reference)?, &mask)
        }
    };
    Ok(m.fit(&without_fixed_points(&data))?)
}

/// Runs [`refit`] on files and returns `{model: fit}`; writes `fit_<model>.json`
/// under `out` when given.
pub fn analyze_files(
    model: &str,
    input: &Path,
    reference: Option<&Path>,
    out: Option<&Path>,
) -> Result<BTreeMap<String, FitResult>> {
    let registry = FitRegistry::with_builtin();
    registry.get(model).map_err(|_| {
        let known: Vec<_> = registry.names().collect();
        CliError::config("--model", format!("unknown model `{model}`, expected one of {}", known.join(", ")))
    })?;
    let rec = load_reconstruction(input)?;
    let reference = reference.map(load_reconstruction).transpose()?;
    let fit = refit(&registry, model, &rec, reference.as_ref())?;
    let fits = BTreeMap::from([(model.to_string(), fit)]);
    if let Some(dir) = out {
        let mut w = crate::bundle::BundleWriter::create(dir)?;
        w.write_with(&format!("fit_{model}.json"), |b| io::write_fits(b, &fits))?;
    }
    Ok(fits)
}
