use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::step_wealth;
use crate::rng::{self, StreamRng};

use super::config::TrainingConfig;
use super::params::{f_theta, gaussian_entropy, policy_mean, policy_variance, PolicyParams};

/// One trajectory `(t_i, u_i, W_i)` generated by the behaviour policy.
///
/// `f_behaviour[i]` and `entropy[i]` record `f^θ(t_i)` and the policy
/// entropy at sampling time, so the loss and scores stay tied to the policy
/// that produced the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub times: Vec<f64>,
    pub actions: Vec<f64>,
    pub wealth: Vec<f64>,
    /// `W_i^p`
    pub wealth_pow: Vec<f64>,
    pub f_behaviour: Vec<f64>,
    pub entropy: Vec<f64>,
    pub terminal_utility: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn terminal_wealth(&self) -> f64 {
        *self.wealth.last().expect("wealth holds W_0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBatch {
    pub episodes: Vec<Episode>,
    /// Trajectories discarded for reaching non-positive wealth.
    pub rejected: usize,
}

/// Simulates one episode; `None` when wealth hits zero or below.
fn try_episode(config: &TrainingConfig, phi: &PolicyParams, cache: &PolicyCache, rng: &mut StreamRng) -> Option<Episode> {
    let PolicyCache {
        f: f_cache,
        variance: var_cache,
        entropy: ent_cache,
    } = cache;
    let grid = &config.grid;
    let (m, spec) = (&config.market, &config.spec);
    let n = grid.n_steps;
    let dt = grid.dt();
    let drift = (m.mu - 0.5 * m.sigma * m.sigma) * dt;
    let vol = m.sigma * dt.sqrt();
    let mean = policy_mean(phi, spec.p);
    let mut ep = Episode {
        times: grid.times(),
        actions: Vec::with_capacity(n),
        wealth: Vec::with_capacity(n + 1),
        wealth_pow: Vec::with_capacity(n + 1),
        f_behaviour: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        terminal_utility: 0.0,
    };
    let mut w = config.w0;
    ep.wealth.push(w);
    ep.wealth_pow.push(w.powf(spec.p));
    for i in 0..n {
        let f = f_cache[i];
        let var = var_cache[i];
        let eps: f64 = rng.sample(StandardNormal);
        let u = mean + var.sqrt() * eps;
        let z: f64 = rng.sample(StandardNormal);
        let ret = (drift + vol * z).exp_m1();
        w = step_wealth(w, u, m.r, dt, ret);
        if !(w > 0.0 && w.is_finite()) {
            return None;
        }
        ep.actions.push(u);
        ep.f_behaviour.push(f);
        ep.entropy.push(ent_cache[i]);
        ep.wealth.push(w);
        ep.wealth_pow.push(w.powf(spec.p));
    }
    ep.terminal_utility = ep.wealth_pow[n] / spec.p;
    Some(ep)
}

/// Per-step `f^θ(t_i)`, policy variance and entropy, shared by a batch.
struct PolicyCache {
    f: Vec<f64>,
    variance: Vec<f64>,
    entropy: Vec<f64>,
}

impl PolicyCache {
    fn new(config: &TrainingConfig, phi: &PolicyParams, theta: &[f64]) -> Self {
        let horizon = config.horizon();
        let f: Vec<f64> = (0..config.grid.n_steps)
            .map(|i| f_theta(theta, config.grid.time(i), horizon))
            .collect();
        let variance: Vec<f64> = f.iter().map(|&f| policy_variance(phi, f, &config.spec)).collect();
        let entropy = variance.iter().map(|&v| gaussian_entropy(v)).collect();
        Self { f, variance, entropy }
    }
}

/// Consecutive redraws of one episode before the batch is abandoned.
pub const MAX_REDRAWS: usize = 10_000;

/// Draws `count` episodes; episode `j` uses stream `j` of `seed`, and a
/// rejected trajectory is redrawn from the same stream.
///
/// Fails with [`Error::Divergence`] (iteration 0) when an episode is
/// rejected [`MAX_REDRAWS`] times in a row.
pub fn generate_episodes(
    config: &TrainingConfig,
    phi: &PolicyParams,
    theta: &[f64],
    count: usize,
    seed: u64,
) -> Result<EpisodeBatch> {
    config.validate()?;
    let cache = PolicyCache::new(config, phi, theta);
    let mut episodes = Vec::with_capacity(count);
    let mut rejected = 0;
    for j in 0..count as u64 {
        let mut rng = rng::stream(seed, j);
        let mut redraws = 0;
        loop {
            match try_episode(config, phi, &cache, &mut rng) {
                Some(ep) => {
                    episodes.push(ep);
                    break;
                }
                None => {
                    rejected += 1;
                    redraws += 1;
                    if redraws >= MAX_REDRAWS {
                        return Err(Error::Divergence {
                            iteration: 0,
                            detail: format!("episode {j} hit non-positive wealth {MAX_REDRAWS} times in a row"),
                        });
                    }
                }
            }
        }
    }
    Ok(EpisodeBatch { episodes, rejected })
}
