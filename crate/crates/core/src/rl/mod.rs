//! Off-line actor-critic learning of the Shannon-entropy exploratory policy.
//!
//! The critic is `V^θ(t, w) = f^θ(t) w^p / p` with
//! `f^θ(t) = exp(Σ_i θ_i (T - t)^i)`, fitted by the martingale loss; the actor
//! is the Gaussian `N(φ1 / (1-p), γ e^{φ2} / ((1-p) f^θ(t)))`, improved by the
//! policy gradient.

mod config;
mod episode;
mod gradient;
mod params;
mod train;

pub use config::TrainingConfig;
pub use episode::{generate_episodes, Episode, EpisodeBatch};
pub use gradient::{martingale_loss, martingale_loss_gradient, martingale_residuals, policy_gradient};
pub use params::{
    f_theta, f_theta_grad, gaussian_entropy, log_density, log_density_grad, policy_mean, policy_variance,
    sample_action, true_phi, PolicyParams, ValueParams,
};
pub use train::{train, IterationRecord, TrainOutcome, Trainer, DIVERGENCE_BOUND};
