//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array_model::ArrayGeometry;
use crate::beamform::{Method, MethodParams, SolverOptionsConfig};
use crate::error::{Error, Result};
use crate::eval::{Averaging, HarnessOptions, Sweep, SweepVariable};
use crate::sector::{DEFAULT_NUM_DOMINANT, DEFAULT_STEP_DEG};
use crate::sim::{Interferer, MismatchModel, Scenario};

fn default_spacing() -> f64 {
    0.5
}
fn default_num_dominant() -> usize {
    DEFAULT_NUM_DOMINANT
}
fn default_subspace_dim() -> usize {
    3
}
fn default_step() -> f64 {
    DEFAULT_STEP_DEG
}
fn default_runs() -> usize {
    100
}
fn default_methods() -> Vec<Method> {
    vec![
        Method::Proposed,
        Method::MvSmi,
        Method::WorstCase,
        Method::Eigenspace,
        Method::SubspaceClosedForm,
    ]
}
fn default_snapshot_sweep() -> Vec<usize> {
    (1..=10).map(|i| 10 * i).collect()
}
fn default_averaging() -> Averaging {
    Averaging::Db
}

/// Inclusive SNR range in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SnrRange {
    fn default() -> Self {
        Self {
            start: -10.0,
            stop: 30.0,
            step: 5.0,
        }
    }
}

impl SnrRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) {
            return Err(Error::Config(format!(
                "snr_sweep: need step > 0 and stop >= start, got {:?}",
                self
            )));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub num_elements: usize,
    #[serde(default = "default_spacing")]
    pub spacing_wavelengths: f64,
    pub presumed_doa_deg: f64,
    pub snr_db: f64,
    pub interferers: Vec<Interferer>,
    pub num_snapshots: usize,
    pub mismatch: MismatchModel,
    pub sector_halfwidth_deg: f64,
    #[serde(default = "default_num_dominant")]
    pub num_dominant: usize,
    /// Worst-case uncertainty bound; `0.3 M` when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_subspace_dim")]
    pub subspace_dim: usize,
    #[serde(default = "default_step")]
    pub quadrature_step_deg: f64,
    #[serde(default)]
    pub solver: SolverOptionsConfig,
    #[serde(default)]
    pub diagonal_loading: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_snapshot_sweep")]
    pub snapshot_sweep: Vec<usize>,
    #[serde(default)]
    pub snr_sweep: SnrRange,
    #[serde(default = "default_averaging")]
    pub averaging: Averaging,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
        Error::Config(format!("field `{field}`: {e}"))
    }

    pub fn validate(&self) -> Result<()> {
        let scenario = self.scenario().map_err(|e| Self::field_err("num_elements/spacing_wavelengths", e))?;
        self.mismatch
            .validate()
            .map_err(|e| Self::field_err("mismatch", e))?;
        scenario
            .validate()
            .map_err(|e| Self::field_err("scenario", e))?;
        if self.num_dominant == 0 || self.num_dominant > self.num_elements {
            return Err(Self::field_err("num_dominant", format!("must be in 1..={}", self.num_elements)));
        }
        if self.subspace_dim == 0 || self.subspace_dim > self.num_elements {
            return Err(Self::field_err("subspace_dim", format!("must be in 1..={}", self.num_elements)));
        }
        if !(self.quadrature_step_deg > 0.0) {
            return Err(Self::field_err("quadrature_step_deg", "must be positive"));
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0) {
                return Err(Self::field_err("epsilon", "must be non-negative"));
            }
        }
        if !(self.solver.tol > 0.0) || !(self.solver.null_rtol > 0.0) {
            return Err(Self::field_err("solver", "tolerances must be positive"));
        }
        if let Some(d) = self.diagonal_loading {
            if !(d >= 0.0) {
                return Err(Self::field_err("diagonal_loading", "must be non-negative"));
            }
        }
        if self.runs == 0 {
            return Err(Self::field_err("runs", "must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Self::field_err("methods", "must list at least one method"));
        }
        if self.snapshot_sweep.is_empty() || self.snapshot_sweep.contains(&0) {
            return Err(Self::field_err("snapshot_sweep", "must be a non-empty list of positive counts"));
        }
        self.snr_sweep
            .values()
            .map_err(|e| Self::field_err("snr_sweep", e))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.num_elements, self.spacing_wavelengths)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Ok(Scenario {
            geometry: self.geometry()?,
            presumed_doa_deg: self.presumed_doa_deg,
            snr_db: self.snr_db,
            interferers: self.interferers.clone(),
            num_snapshots: self.num_snapshots,
            mismatch: self.mismatch.clone(),
            sector_halfwidth_deg: self.sector_halfwidth_deg,
            seed: self.seed,
        })
    }

    pub fn method_params(&self) -> MethodParams {
        MethodParams {
            epsilon: self.epsilon.unwrap_or(0.3 * self.num_elements as f64),
            subspace_dim: self.subspace_dim,
            solver: self.solver,
        }
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            runs: self.runs,
            methods: self.methods.clone(),
            params: self.method_params(),
            quadrature_step: self.quadrature_step_deg,
            num_dominant: self.num_dominant,
            averaging: self.averaging,
            diagonal_loading: self.diagonal_loading,
            threads: None,
        }
    }

    pub fn sweep(&self, variable: SweepVariable) -> Result<Sweep> {
        let values = match variable {
            SweepVariable::Snapshots => self.snapshot_sweep.iter().map(|&k| k as f64).collect(),
            SweepVariable::SnrDb => self.snr_sweep.values()?,
        };
        Ok(Sweep { variable, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "num_elements": 10,
        "presumed_doa_deg": 3.0,
        "snr_db": 20.0,
        "interferers": [{"doa_deg": 30.0, "inr_db": 30.0}, {"doa_deg": 50.0, "inr_db": 30.0}],
        "num_snapshots": 30,
        "mismatch": {"type": "exact"},
        "sector_halfwidth_deg": 5.0
    }"#;

    #[test]
    fn minimal_config_matches_reference_scenario() {
        let cfg = Config::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.scenario().unwrap(), Scenario::reference(MismatchModel::Exact));
        assert_eq!(cfg.method_params(), MethodParams::reference(10));
        assert_eq!(cfg.sweep(SweepVariable::SnrDb).unwrap().values, Sweep::reference_snr().values);
        assert_eq!(cfg.sweep(SweepVariable::Snapshots).unwrap().values, Sweep::reference_snapshots().values);
    }

    #[test]
    fn unknown_field_is_reported_with_position() {
        let text = MINIMAL.replace("\"snr_db\"", "\"snr\": 1, \"snr_db\"");
        let err = Config::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("unknown field `snr`"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let text = MINIMAL.replace("\"num_snapshots\": 30", "\"num_snapshots\": 30, \"subspace_dim\": 0");
        let err = Config::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("subspace_dim"), "{err}");
        let text = MINIMAL.replace("\"exact\"", "\"phase_distortion\", \"variance\": -1.0");
        let err = Config::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("mismatch"), "{err}");
    }

    #[test]
    fn snr_range_is_inclusive() {
        let r = SnrRange { start: 0.0, stop: 50.0, step: 10.0 };
        assert_eq!(r.values().unwrap(), vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
    }
}
