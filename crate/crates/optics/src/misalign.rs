//! Synthetic alignment errors applied per sorted mode.
//!
//! An axial offset of the sorter shows up as a phase quadratic in `ell`, a lateral
//! offset as a phase linear in `ell`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Misalignment {
    /// rad per mode²
    pub defocus: f64,
    /// rad per mode
    pub tilt: f64,
}

impl Misalignment {
    pub fn is_zero(&self) -> bool {
        self.defocus == 0.0 && self.tilt == 0.0
    }

    pub fn phase(&self, ell: i32) -> f64 {
        let l = ell as f64;
        self.defocus * l * l + self.tilt * l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_terms() {
        let m = Misalignment { defocus: 0.01, tilt: -0.02 };
        assert_eq!(m.phase(0), 0.0);
        assert!((m.phase(3) - (0.09 - 0.06)).abs() < 1e-15);
        assert!((m.phase(-3) - (0.09 + 0.06)).abs() < 1e-15);
        assert!(Misalignment::default().is_zero());
    }
}
