//! Run configuration: one JSON document describing the model, the
//! bankruptcy rate function, the discount and transaction-cost parameters,
//! the solver grid and an optional simulation block. Unknown keys are
//! rejected so that a typo cannot silently change an experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::levy::{JumpComponent, LevyModel};
use crate::omega::{BankruptcyRate, Segment, SegmentShape};
use crate::sim::SimMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub omega: OmegaConfig,
    pub q: f64,
    pub beta: f64,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    pub sigma: f64,
    pub jump_intensity: f64,
    #[serde(default)]
    pub jump_mixture: Vec<JumpComponentConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpComponentConfig {
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub a: f64,
    pub phi: f64,
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentConfig {
    Constant { from: f64, to: f64, value: f64 },
    Linear {
        from: f64,
        to: f64,
        value_at_from: f64,
        slope: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub mode: SimMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-validates every module-level invariant by constructing the domain
    /// objects, plus the config-only constraints (q, beta, grid).
    pub fn validate(&self) -> Result<()> {
        self.build_model()?;
        self.build_omega()?;
        if !(self.q > 0.0) {
            return Err(Error::Config(format!("q must be > 0, got {}", self.q)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.grid.h > 0.0) || !(self.grid.x_max > 0.0) {
            return Err(Error::Config("grid h and x_max must be positive".into()));
        }
        if let Some(sim) = &self.simulation {
            if sim.n_paths == 0 {
                return Err(Error::Config("n_paths must be >= 1".into()));
            }
            if !(sim.dt > 0.0) {
                return Err(Error::Config("dt must be > 0".into()));
            }
            if (-self.q * sim.t_max).exp() >= 1e-6 {
                return Err(Error::Config(format!(
                    "t_max too small: e^(-q t_max) must be < 1e-6, need t_max > {:.1}",
                    -(1e-6f64).ln() / self.q
                )));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<LevyModel> {
        let mixture = self
            .model
            .jump_mixture
            .iter()
            .map(|c| JumpComponent {
                weight: c.weight,
                rate: c.rate,
            })
            .collect();
        LevyModel::new(
            self.model.mu,
            self.model.sigma,
            self.model.jump_intensity,
            mixture,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_omega(&self) -> Result<BankruptcyRate> {
        let segments = self
            .omega
            .segments
            .iter()
            .map(|s| match *s {
                SegmentConfig::Constant { from, to, value } => Segment {
                    from,
                    to,
                    shape: SegmentShape::Constant { value },
                },
                SegmentConfig::Linear {
                    from,
                    to,
                    value_at_from,
                    slope,
                } => Segment {
                    from,
                    to,
                    shape: SegmentShape::Linear {
                        value_at_start: value_at_from,
                        slope,
                    },
                },
            })
            .collect();
        BankruptcyRate::new(self.omega.a, self.omega.phi, segments)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Hash of the canonical JSON serialisation; stamped into every output
    /// file so results can be traced back to their configuration.
    pub fn hash(&self) -> String {
        hash_hex(&serde_json::to_vec(self).expect("config serialises"))
    }
}

/// SHA-256 hex digest, truncated to 16 hex chars for readability.
pub(crate) fn hash_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect::<String>()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const REFERENCE_JSON: &str = r#"{
      "model": {
        "mu": 0.075, "sigma": 0.5, "jump_intensity": 0.5,
        "jump_mixture": [{"weight": 1.0, "rate": 9.0}]
      },
      "omega": {
        "a": -1.0, "phi": 1.5,
        "segments": [
          {"kind": "linear", "from": -1.0, "to": 0.0, "value_at_from": 1.5, "slope": -0.15}
        ]
      },
      "q": 0.025,
      "beta": 0.001,
      "grid": {"h": 0.001, "x_max": 10.0}
    }"#;

    #[test]
    fn reference_config_parses_and_validates() {
        let cfg = RunConfig::from_json(REFERENCE_JSON).unwrap();
        assert_eq!(cfg.q, 0.025);
        let omega = cfg.build_omega().unwrap();
        assert_eq!(omega.value(-2.0), 1.5);
        assert!((omega.value(-0.5) - 1.425).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = REFERENCE_JSON.replace("\"q\": 0.025,", "\"q\": 0.025, \"qq\": 1,");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn missing_phi_is_a_config_error() {
        let bad = REFERENCE_JSON.replace("\"phi\": 1.5,", "");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        let bad = REFERENCE_JSON.replace("\"beta\": 0.001", "\"beta\": 0.0");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn hash_is_deterministic() {
        let a = RunConfig::from_json(REFERENCE_JSON).unwrap().hash();
        let b = RunConfig::from_json(REFERENCE_JSON).unwrap().hash();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
    }
}
