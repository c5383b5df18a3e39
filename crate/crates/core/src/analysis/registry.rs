//! Fit models addressable by name, so callers can select them from config or CLI.

use std::collections::BTreeMap;

use super::fit::{self, DataPoint, FitResult, ModelKind};
use crate::{Error, Result};

/// A model that can be fitted to an already-masked data series.
pub trait FitModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// Which reconstructed quantity the model is meant for.
    fn target(&self) -> FitTarget;

    fn fit(&self, data: &[DataPoint]) -> Result<FitResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    /// `|Psi(ell)|²`
    Density,
    /// `phi(ell)` of a single reconstruction
    Phase,
    /// phase difference to a reference reconstruction
    PhaseDifference,
}

pub struct SincSquared;
pub struct QuadraticPhase;
pub struct LinearPhase;

impl FitModel for SincSquared {
    fn kind(&self) -> ModelKind {
        ModelKind::SincSquared
    }
    fn target(&self) -> FitTarget {
        FitTarget::Density
    }
    fn fit(&self, data: &[DataPoint]) -> Result<FitResult> {
        fit::fit_sinc_squared(data)
    }
}

impl FitModel for QuadraticPhase {
    fn kind(&self) -> ModelKind {
        ModelKind::QuadraticPhase
    }
    fn target(&self) -> FitTarget {
        FitTarget::Phase
    }
    fn fit(&self, data: &[DataPoint]) -> Result<FitResult> {
        fit::fit_phase_quadratic(data)
    }
}

impl FitModel for LinearPhase {
    fn kind(&self) -> ModelKind {
        ModelKind::LinearPhase
    }
    fn target(&self) -> FitTarget {
        FitTarget::PhaseDifference
    }
    fn fit(&self, data: &[DataPoint]) -> Result<FitResult> {
        fit::fit_phase_linear_chi2(data)
    }
}

pub struct FitRegistry {
    models: BTreeMap<&'static str, Box<dyn FitModel>>,
}

impl FitRegistry {
    pub fn empty() -> Self {
        Self {
            models: BTreeMap::new(),
        }
    }

    /// Registry holding the three built-in models.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SincSquared));
        r.register(Box::new(QuadraticPhase));
        r.register(Box::new(LinearPhase));
        r
    }

    /// Adds a model, replacing any earlier one with the same name.
    pub fn register(&mut self, model: Box<dyn FitModel>) -> Option<Box<dyn FitModel>> {
        self.models.insert(model.name(), model)
    }

    pub fn get(&self, name: &str) -> Result<&dyn FitModel> {
        self.models
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.models.keys().copied()
    }
}

impl Default for FitRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_resolve() {
        let r = FitRegistry::with_builtin();
        assert_eq!(
            r.names().collect::<Vec<_>>(),
            ["linear-phase", "quadratic-phase", "sinc-squared"]
        );
        for name in r.names() {
            assert_eq!(r.get(name).unwrap().name(), name);
        }
        assert!(matches!(r.get("gaussian"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn registered_model_is_dispatched() {
        let r = FitRegistry::with_builtin();
        let data: Vec<DataPoint> = (-5..=5).map(|x| DataPoint::new(x as f64, 0.2 * x as f64, 0.0)).collect();
        let fit = r.get("linear-phase").unwrap().fit(&data).unwrap();
        assert!((fit.param("slope").unwrap().value - 0.2).abs() < 1e-12);
    }
}
