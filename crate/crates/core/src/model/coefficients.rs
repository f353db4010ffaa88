use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Importance coefficients of the objective terms.
///
/// `psi*` weight the terms that track the predicted dose, `xi*` the terms
/// that push beyond it toward the prescription (targets) or toward zero
/// (organs). `zeta`/`chi` shape the structure-maximum reduction band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coefficients {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub psi4: f64,
    pub psi5: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub xi4: f64,
    pub zeta: f64,
    pub chi: f64,
    /// Per-structure `zeta`, keyed by ROI name.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub zeta_overrides: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub chi_overrides: BTreeMap<String, f64>,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            psi1: 2e6,
            psi2: 5e5,
            psi3: 2e5,
            psi4: 2e5,
            psi5: 1e3,
            xi1: 2e4,
            xi2: 2e2,
            xi3: 1e3,
            xi4: 50.0,
            zeta: 0.9,
            chi: 0.1,
            zeta_overrides: BTreeMap::new(),
            chi_overrides: BTreeMap::new(),
        }
    }
}

impl Coefficients {
    pub fn psi(&self) -> [f64; 5] {
        [self.psi1, self.psi2, self.psi3, self.psi4, self.psi5]
    }

    pub fn xi(&self) -> [f64; 4] {
        [self.xi1, self.xi2, self.xi3, self.xi4]
    }

    pub fn zeta_for(&self, roi: &str) -> f64 {
        self.zeta_overrides.get(roi).copied().unwrap_or(self.zeta)
    }

    pub fn chi_for(&self, roi: &str) -> f64 {
        self.chi_overrides.get(roi).copied().unwrap_or(self.chi)
    }

    /// All nine importance coefficients multiplied by `c`; band shape unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            psi1: self.psi1 * c,
            psi2: self.psi2 * c,
            psi3: self.psi3 * c,
            psi4: self.psi4 * c,
            psi5: self.psi5 * c,
            xi1: self.xi1 * c,
            xi2: self.xi2 * c,
            xi3: self.xi3 * c,
            xi4: self.xi4 * c,
            ..self.clone()
        }
    }

    /// Prediction mimicking only: every `xi` set to zero.
    pub fn mimic_only(&self) -> Self {
        Self {
            xi1: 0.0,
            xi2: 0.0,
            xi3: 0.0,
            xi4: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidCoefficients(m));
        for (name, v) in ["psi1", "psi2", "psi3", "psi4", "psi5"]
            .iter()
            .zip(self.psi())
            .chain(["xi1", "xi2", "xi3", "xi4"].iter().zip(self.xi()))
        {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        let mut bands = vec![("default".to_string(), self.zeta, self.chi)];
        let names: std::collections::BTreeSet<&String> = self
            .zeta_overrides
            .keys()
            .chain(self.chi_overrides.keys())
            .collect();
        for name in names {
            bands.push((name.clone(), self.zeta_for(name), self.chi_for(name)));
        }
        for (name, zeta, chi) in bands {
            if !(zeta > 0.0 && zeta < 1.0 && chi > 0.0 && chi < 1.0) {
                return bad(format!("{name}: zeta and chi must lie in (0, 1)"));
            }
            // Small slack: 1 - 0.9 rounds above 0.1 in binary.
            if chi < 1.0 - zeta - 1e-12 {
                return bad(format!("{name}: chi ({chi}) must be at least 1 - zeta ({})", 1.0 - zeta));
            }
        }
        Ok(())
    }
}
