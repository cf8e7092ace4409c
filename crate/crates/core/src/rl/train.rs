use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::config::TrainingConfig;
use super::episode::generate_episodes;
use super::gradient::{martingale_loss, martingale_loss_gradient, policy_gradient};
use super::params::{f_theta, true_phi, PolicyParams};

/// Training aborts once any parameter leaves `[-1e3, 1e3]`.
pub const DIVERGENCE_BOUND: f64 = 1e3;

/// Parameters after one iteration, with the martingale loss of that
/// iteration's batch before the critic update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub theta: Vec<f64>,
    pub ml_loss: f64,
    pub reject_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<IterationRecord>,
    pub theta: Vec<f64>,
    pub phi: PolicyParams,
    pub true_phi: PolicyParams,
    pub rejected: usize,
    pub episodes_drawn: usize,
}

impl TrainOutcome {
    /// `f^θ` of the final critic.
    pub fn f_learned(&self, t: f64, horizon: f64) -> f64 {
        f_theta(&self.theta, t, horizon)
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejected as f64 / (self.rejected + self.episodes_drawn).max(1) as f64
    }
}

/// Stateful actor-critic loop; iteration `k` draws its minibatch from seed
/// `derive_seed(config.seed, k)`.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainingConfig,
    theta: Vec<f64>,
    phi: PolicyParams,
    iter: usize,
    rejected: usize,
    history: Vec<IterationRecord>,
}

impl Trainer {
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            theta: config.theta_init.clone(),
            phi: config.phi_init,
            iter: 0,
            rejected: 0,
            history: Vec::with_capacity(config.episodes),
            config,
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> PolicyParams {
        self.phi
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.iter >= self.config.episodes
    }

    /// One policy-evaluation step (descent on θ) followed by one
    /// policy-update step (ascent on φ) on the same minibatch.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        let cfg = &self.config;
        let horizon = cfg.horizon();
        let seed = rng::derive_seed(cfg.seed, self.iter as u64);
        let iteration = self.iter + 1;
        let batch = generate_episodes(cfg, &self.phi, &self.theta, cfg.minibatch, seed).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { iteration, detail },
            other => other,
        })?;
        let ml = martingale_loss(&batch, &self.theta, &cfg.spec, horizon);
        let g_theta = martingale_loss_gradient(&batch, &self.theta, &cfg.spec, horizon);
        for (th, g) in self.theta.iter_mut().zip(&g_theta) {
            *th -= cfg.lr_theta * g;
        }
        let g_phi = policy_gradient(&batch, &self.theta, &self.phi, &cfg.spec, horizon);
        self.phi.phi1 += cfg.lr_phi * g_phi[0];
        self.phi.phi2 += cfg.lr_phi * g_phi[1];
        self.iter += 1;
        self.rejected += batch.rejected;
        let out_of_range = self
            .theta
            .iter()
            .chain([&self.phi.phi1, &self.phi.phi2])
            .any(|x| !(x.abs() <= DIVERGENCE_BOUND));
        if out_of_range {
            return Err(Error::Divergence {
                iteration: self.iter,
                detail: format!(
                    "parameters left [-{DIVERGENCE_BOUND}, {DIVERGENCE_BOUND}]: theta = {:?}, phi = ({}, {})",
                    self.theta, self.phi.phi1, self.phi.phi2
                ),
            });
        }
        self.history.push(IterationRecord {
            iter: self.iter,
            phi1: self.phi.phi1,
            phi2: self.phi.phi2,
            theta: self.theta.clone(),
            ml_loss: ml,
            reject_count: batch.rejected,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Runs the remaining iterations.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn outcome(&self) -> TrainOutcome {
        TrainOutcome {
            history: self.history.clone(),
            theta: self.theta.clone(),
            phi: self.phi,
            true_phi: true_phi(&self.config.market),
            rejected: self.rejected,
            episodes_drawn: self.iter * self.config.minibatch,
        }
    }
}

/// Full training run.
pub fn train(config: &TrainingConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone())?;
    trainer.run()?;
    Ok(trainer.outcome())
}
