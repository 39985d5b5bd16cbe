//! Run configuration: every tunable knob lives here, loads from TOML, and
//! is validated once. Unknown keys are hard errors so experiment manifests
//! stay trustworthy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{field} out of [0,1]")]
    UnitRange { field: &'static str },
    #[error("{field} must be >= 1")]
    ZeroCount { field: &'static str },
    #[error("srm_window must be <= max_steps")]
    WindowExceedsBudget,
}

/// All free parameters of the system. Defaults are small so oracle-backend
/// runs stay sub-second while still exercising every code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CortexConfig {
    /// Number of candidate plans proposed per decision step.
    pub n_candidates: usize,
    /// Maximum predicted steps per world-model rollout.
    pub imagination_horizon: usize,
    /// Sliding-window size for short-term reflection, in subtasks.
    pub srm_window: usize,
    /// Downstream-trajectory horizon for principle construction.
    pub lpm_horizon: usize,
    /// Similarity floor for principle retrieval.
    pub lpm_threshold: f64,
    /// Semantic-similarity floor for heuristic cluster refinement.
    pub sim_threshold: f64,
    /// Minimum merged confidence for heuristic feedback.
    pub confidence_floor: f64,
    /// Minimum cluster evidence count for heuristic feedback.
    pub min_support: usize,
    /// Per-goal episode cap enforced by consolidation.
    pub max_episodes_per_goal: usize,
    /// Episode step budget, in executed actions.
    pub max_steps: usize,
    /// Per-step corruption rate of the oracle world model.
    pub world_model_noise: f64,
    /// Master randomness seed.
    pub seed: u64,
}

impl Default for CortexConfig {
    fn default() -> Self {
        Self {
            n_candidates: 3,
            imagination_horizon: 4,
            srm_window: 5,
            lpm_horizon: 6,
            lpm_threshold: 0.8,
            sim_threshold: 0.85,
            confidence_floor: 0.7,
            min_support: 2,
            max_episodes_per_goal: 3,
            max_steps: 100,
            world_model_noise: 0.0,
            seed: 0,
        }
    }
}

impl CortexConfig {
    /// Validate field invariants. Violations are rejected, never clamped.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |v: f64, field: &'static str| {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                Err(ConfigError::UnitRange { field })
            } else {
                Ok(())
            }
        };
        unit(self.lpm_threshold, "lpm_threshold")?;
        unit(self.sim_threshold, "sim_threshold")?;
        unit(self.confidence_floor, "confidence_floor")?;
        unit(self.world_model_noise, "world_model_noise")?;
        let count = |v: usize, field: &'static str| {
            if v == 0 {
                Err(ConfigError::ZeroCount { field })
            } else {
                Ok(())
            }
        };
        count(self.n_candidates, "n_candidates")?;
        count(self.imagination_horizon, "imagination_horizon")?;
        count(self.srm_window, "srm_window")?;
        count(self.lpm_horizon, "lpm_horizon")?;
        count(self.min_support, "min_support")?;
        count(self.max_episodes_per_goal, "max_episodes_per_goal")?;
        count(self.max_steps, "max_steps")?;
        if self.srm_window > self.max_steps {
            return Err(ConfigError::WindowExceedsBudget);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parse a TOML document into a validated config. Absent keys take their
/// defaults; unknown keys are rejected.
pub fn load_config(source: &str) -> Result<CortexConfig, ConfigError> {
    let config: CortexConfig =
        toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
