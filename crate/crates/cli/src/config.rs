use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use quadlin::evaluation::PtvCriterionMode;
use quadlin::patient_io::VoxelWeighting;
use quadlin::{Coefficients, SolverConfig};
use serde::{Deserialize, Serialize};

/// Everything that shapes a run besides its inputs. Read from a JSON file;
/// missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub coefficients: Coefficients,
    pub solver: SolverConfig,
    pub voxel_weighting: VoxelWeighting,
    pub ptv_criteria: PtvCriterionMode,
    /// Dose bin width for DVH curves.
    pub dvh_bin_gy: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            coefficients: Coefficients::default(),
            solver: SolverConfig::default(),
            voxel_weighting: VoxelWeighting::Uniform,
            ptv_criteria: PtvCriterionMode::Coverage,
            dvh_bin_gy: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is absent; `seed` overrides the solver seed.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.solver.seed = s;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.coefficients.validate()?;
        self.solver.validate()?;
        if !(self.dvh_bin_gy.is_finite() && self.dvh_bin_gy > 0.0) {
            bail!("dvh_bin_gy must be positive, got {}", self.dvh_bin_gy);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"coefficients": {"xi2": 2000}, "solver": {"max_iters": 5}}"#).unwrap();
        assert_eq!(cfg.coefficients.xi2, 2000.0);
        assert_eq!(cfg.coefficients.psi1, 2e6);
        assert_eq!(cfg.solver.max_iters, 5);
        assert_eq!(cfg.solver.rel_obj_tol, 1e-6);
        assert!(serde_json::from_str::<RunConfig>(r#"{"solvr": {}}"#).is_err());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&RunConfig::default()).unwrap()).unwrap();
        assert_eq!(back, RunConfig::default());
    }
}
