use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, TimeGrid};
use crate::policy::{Beta, ExplorationSpec};

use super::params::PolicyParams;

/// Hyper-parameters of one training run. Missing JSON keys take the
/// reference values (`M = 5000`, minibatch 32, `l_θ = 0.001`, `l_φ = 0.01`,
/// zero initialization, `Δt = 1/250` on `[0, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub market: MarketParams,
    pub spec: ExplorationSpec,
    pub w0: f64,
    pub grid: TimeGrid,
    /// Number of iterations `M`; each draws a fresh minibatch.
    pub episodes: usize,
    pub minibatch: usize,
    pub lr_theta: f64,
    pub lr_phi: f64,
    pub theta_init: Vec<f64>,
    pub phi_init: PolicyParams,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            market: MarketParams::reference(),
            spec: ExplorationSpec::reference(),
            w0: 1.0,
            grid: TimeGrid {
                t0: 0.0,
                end: 1.0,
                n_steps: 250,
            },
            episodes: 5000,
            minibatch: 32,
            lr_theta: 0.001,
            lr_phi: 0.01,
            theta_init: vec![0.0, 0.0],
            phi_init: PolicyParams::new(0.0, 0.0),
            seed: 0,
        }
    }
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.market.validate().map_err(|e| config_err("market", e.to_string()))?;
        self.spec.validate().map_err(|e| config_err("spec", e.to_string()))?;
        if self.spec.beta != Beta::Shannon {
            return Err(config_err("spec.beta", "training supports beta = 1 only"));
        }
        if self.spec.p == 0.0 {
            return Err(config_err("spec.p", "the critic f(t) w^p / p needs p != 0"));
        }
        self.grid.validate().map_err(|e| config_err("grid", e.to_string()))?;
        if self.grid.t0 != 0.0 {
            return Err(config_err("grid.t0", "episodes start at t = 0"));
        }
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(config_err("w0", format!("must be positive, got {}", self.w0)));
        }
        if self.episodes == 0 {
            return Err(config_err("episodes", "must be >= 1"));
        }
        if self.minibatch == 0 {
            return Err(config_err("minibatch", "must be >= 1"));
        }
        if !(self.lr_theta > 0.0 && self.lr_theta.is_finite()) {
            return Err(config_err("lr_theta", "must be positive"));
        }
        if !(self.lr_phi > 0.0 && self.lr_phi.is_finite()) {
            return Err(config_err("lr_phi", "must be positive"));
        }
        if self.theta_init.is_empty() || self.theta_init.iter().any(|x| !x.is_finite()) {
            return Err(config_err("theta_init", "need at least one finite coefficient"));
        }
        if !(self.phi_init.phi1.is_finite() && self.phi_init.phi2.is_finite()) {
            return Err(config_err("phi_init", "entries must be finite"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.grid.end
    }
}
