//! Run configuration documents and model preparation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::hamiltonians::{
    build_fermi_hubbard, build_tfi, load_matrix, normalize_and_shift, spectrum_for_alpha, DenseHamiltonian, EnergyMap,
    Spectrum,
};
use crate::solver::SolverOptions;

/// On-site interaction of the `fh<L>` models.
pub const HUBBARD_INTERACTION: f64 = 10.0;

fn default_levels() -> usize {
    10
}

/// A run-config document.
///
/// `model` is `"tfi8"`, `"fh4"` or `"custom"` (with `matrix`); other chain
/// lengths are accepted as `"tfi<L>"` and `"fh<L>"`. A top-level `solver`
/// section replaces the estimator's own. `noiseless` applies to both the
/// estimator and the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    pub alpha: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOptions<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative `matrix` paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = RunConfig::from_json(&text)?;
        if let (Some(m), Some(dir)) = (cfg.matrix.as_ref(), path.parent()) {
            if m.is_relative() {
                cfg.matrix = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ModelSpec::parse(&self.model, self.matrix.as_deref())?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.levels == 0 {
            return Err(Error::config("levels must be positive"));
        }
        if let Some(s) = &self.solver {
            s.validate()?;
            if self.estimator.as_ref().is_some_and(|e| e.solver != SolverOptions::default()) {
                return Err(Error::config("solver options given both at top level and inside estimator"));
            }
        }
        if let Some(e) = &self.estimator {
            self.resolve_estimator(e).validate()?;
        }
        if let Some(b) = &self.baseline {
            b.validate()?;
        }
        Ok(())
    }

    fn resolve_estimator(&self, e: &EstimatorConfig) -> EstimatorConfig {
        let mut e = e.clone();
        if let Some(s) = &self.solver {
            e.solver = s.clone();
        }
        e.noiseless |= self.noiseless;
        e
    }

    /// The estimator section with the top-level overrides applied.
    pub fn estimator(&self) -> Result<EstimatorConfig> {
        let e = self.estimator.as_ref().ok_or_else(|| Error::config("config has no \"estimator\" section"))?;
        Ok(self.resolve_estimator(e))
    }

    pub fn baseline(&self) -> Result<&BaselineConfig> {
        self.baseline.as_ref().ok_or_else(|| Error::config("config has no \"baseline\" section"))
    }

    pub fn prepare_model(&self) -> Result<PreparedModel> {
        PreparedModel::new(&ModelSpec::parse(&self.model, self.matrix.as_deref())?, self.alpha, self.levels)
    }
}

/// A resolved model name.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Tfi(usize),
    Hubbard(usize),
    Custom(PathBuf),
}

impl ModelSpec {
    pub fn parse(name: &str, matrix: Option<&Path>) -> Result<Self> {
        let sites = |digits: &str| -> Result<usize> {
            digits.parse().map_err(|_| Error::config(format!("unknown model {name:?}")))
        };
        let spec = if name == "custom" {
            let path = matrix.ok_or_else(|| Error::config("model \"custom\" needs a \"matrix\" path"))?;
            return Ok(ModelSpec::Custom(path.to_path_buf()));
        } else if let Some(rest) = name.strip_prefix("tfi") {
            ModelSpec::Tfi(sites(rest)?)
        } else if let Some(rest) = name.strip_prefix("fh") {
            ModelSpec::Hubbard(sites(rest)?)
        } else {
            return Err(Error::config(format!("unknown model {name:?}; expected tfi8, fh4 or custom")));
        };
        if matrix.is_some() {
            return Err(Error::config("\"matrix\" is only valid with model \"custom\""));
        }
        match spec {
            ModelSpec::Tfi(l) if !(2..=12).contains(&l) => {
                Err(Error::config(format!("TFI sites must be in 2..=12, got {l}")))
            }
            ModelSpec::Hubbard(l) if !(1..=5).contains(&l) => {
                Err(Error::config(format!("Fermi-Hubbard sites must be in 1..=5, got {l}")))
            }
            s => Ok(s),
        }
    }

    pub fn build(&self) -> Result<DenseHamiltonian> {
        match self {
            ModelSpec::Tfi(l) => build_tfi(*l),
            ModelSpec::Hubbard(l) => build_fermi_hubbard(*l, HUBBARD_INTERACTION),
            ModelSpec::Custom(path) => load_matrix(path),
        }
    }
}

/// A normalized, shifted model with its initial-state spectrum.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub hamiltonian: DenseHamiltonian,
    pub spectrum: Spectrum,
    /// Exact ground energy of the normalized Hamiltonian.
    pub ground_energy: f64,
}

impl PreparedModel {
    pub fn new(spec: &ModelSpec, alpha: f64, levels: usize) -> Result<Self> {
        let hamiltonian = normalize_and_shift(&spec.build()?)?;
        let spectrum = spectrum_for_alpha(&hamiltonian, alpha, levels)?;
        let ground_energy = hamiltonian.eigenvalues()[0];
        Ok(PreparedModel { hamiltonian, spectrum, ground_energy })
    }

    /// Maps normalized energies back to the original Hamiltonian.
    pub fn energy_map(&self) -> EnergyMap {
        self.hamiltonian.energy_map()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const MINIMAL: &str = r#"{"model": "tfi8", "alpha": 0.125}"#;

    #[test]
    fn minimal_config_and_model() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.levels, 10);
        assert_eq!(cfg.seed, 0);
        let m = cfg.prepare_model().unwrap();
        assert_eq!(m.hamiltonian.dim(), 256);
        assert!((m.spectrum.overlaps()[0] - 0.875).abs() < 1e-3);
        assert!(m.ground_energy >= PI / 4.0 - 1e-12 && m.ground_energy <= 3.0 * PI / 4.0 + 1e-12);
        let back = m.energy_map().inverse(m.ground_energy);
        let raw = build_tfi(8).unwrap().eigenvalues()[0];
        assert!((back - raw).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_documents() {
        for bad in [
            r#"{"model": "tfi8", "alpha": 0.125, "extra": 1}"#,
            r#"{"model": "tfi8"}"#,
            r#"{"model": "ising", "alpha": 0.1}"#,
            r#"{"model": "tfi8", "alpha": 1.5}"#,
            r#"{"model": "custom", "alpha": 0.1}"#,
            r#"{"model": "tfi8", "matrix": "h.txt", "alpha": 0.1}"#,
            r#"{"model": "tfi20", "alpha": 0.1}"#,
            r#"{"model": "tfi8", "alpha": 0.1, "estimator": {"r": 2.0}}"#,
            r#"{"model": "tfi8", "alpha": 0.1, "estimator": {"bogus": 1}}"#,
            r#"{"model": "tfi8", "alpha": 0.1, "solver": {"max_iter": 0}}"#,
            r#"{"model": "tfi8", "alpha": 0.1, "baseline": {"algorithm": "qmegs", "t_max": -1}}"#,
        ] {
            let err = RunConfig::from_json(bad).unwrap_err();
            assert!(err.is_config(), "{bad}: {err}");
        }
    }

    #[test]
    fn top_level_overrides() {
        let cfg = RunConfig::from_json(
            r#"{"model": "fh2", "alpha": 0.5, "noiseless": true,
                "estimator": {"n": 64}, "solver": {"max_iter": 77}}"#,
        )
        .unwrap();
        let e = cfg.estimator().unwrap();
        assert!(e.noiseless);
        assert_eq!(e.solver.max_iter, 77);
        assert!(cfg.baseline().unwrap_err().is_config());
        let both =
            r#"{"model": "fh2", "alpha": 0.5, "estimator": {"solver": {"max_iter": 5}}, "solver": {"max_iter": 6}}"#;
        assert!(RunConfig::from_json(both).unwrap_err().is_config());
    }

    #[test]
    fn custom_matrix_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("h.txt"), "1 0 0 0\n0 0 -1 0\n").unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"model": "custom", "matrix": "h.txt", "alpha": 0.5, "levels": 2}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        let m = cfg.prepare_model().unwrap();
        assert_eq!(m.spectrum.len(), 2);
        assert!((m.energy_map().inverse(m.ground_energy) + 1.0).abs() < 1e-12);
    }
}
