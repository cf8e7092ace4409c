use crate::policy::ExplorationSpec;

use super::episode::{Episode, EpisodeBatch};
use super::params::{f_theta, log_density_grad, PolicyParams};

fn f_on_grid(times: &[f64], theta: &[f64], horizon: f64) -> Vec<f64> {
    times.iter().map(|&t| f_theta(theta, t, horizon)).collect()
}

fn residuals_with(ep: &Episode, f: &[f64], spec: &ExplorationSpec) -> Vec<f64> {
    let n = ep.len();
    let mut out = vec![0.0; n];
    let mut tail = 0.0;
    for i in (0..n).rev() {
        let dt = ep.times[i + 1] - ep.times[i];
        tail += spec.gamma * ep.wealth_pow[i] * ep.entropy[i] * dt;
        out[i] = ep.terminal_utility - f[i] * ep.wealth_pow[i] / spec.p + tail;
    }
    out
}

/// `D_i = U(W_T) - V^θ(t_i, W_i) + γ Σ_{j≥i} W_j^p H_j Δt` for one episode.
pub fn martingale_residuals(ep: &Episode, theta: &[f64], spec: &ExplorationSpec, horizon: f64) -> Vec<f64> {
    residuals_with(ep, &f_on_grid(&ep.times, theta, horizon), spec)
}

/// `ML(θ) = ½ avg Σ_i D_i² Δt`.
pub fn martingale_loss(batch: &EpisodeBatch, theta: &[f64], spec: &ExplorationSpec, horizon: f64) -> f64 {
    let Some(first) = batch.episodes.first() else {
        return 0.0;
    };
    let f = f_on_grid(&first.times, theta, horizon);
    let total: f64 = batch
        .episodes
        .iter()
        .map(|ep| {
            residuals_with(ep, &f, spec)
                .iter()
                .enumerate()
                .map(|(i, d)| 0.5 * d * d * (ep.times[i + 1] - ep.times[i]))
                .sum::<f64>()
        })
        .sum();
    total / batch.episodes.len() as f64
}

/// `∂ML/∂θ_k = -avg Σ_i D_i V^θ_i (T - t_i)^k Δt`.
pub fn martingale_loss_gradient(batch: &EpisodeBatch, theta: &[f64], spec: &ExplorationSpec, horizon: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let Some(first) = batch.episodes.first() else {
        return grad;
    };
    let f = f_on_grid(&first.times, theta, horizon);
    for ep in &batch.episodes {
        let d = residuals_with(ep, &f, spec);
        for (i, di) in d.iter().enumerate() {
            let t = ep.times[i];
            let dt = ep.times[i + 1] - t;
            let v = f[i] * ep.wealth_pow[i] / spec.p;
            let tau = horizon - t;
            let mut pow = 1.0;
            for g in grad.iter_mut() {
                pow *= tau;
                *g -= di * v * pow * dt;
            }
        }
    }
    let n = batch.episodes.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    grad
}

/// Minibatch average of `Σ_i G_i` with
/// `G_i = ∇_φ log π(u_i) [V_{i+1} - V_i + γ W_i^p H_i Δt] + γ W_i^p ∇_φ H_i Δt`.
pub fn policy_gradient(
    batch: &EpisodeBatch,
    theta: &[f64],
    phi: &PolicyParams,
    spec: &ExplorationSpec,
    horizon: f64,
) -> [f64; 2] {
    let mut grad = [0.0; 2];
    let Some(first) = batch.episodes.first() else {
        return grad;
    };
    let f = f_on_grid(&first.times, theta, horizon);
    for ep in &batch.episodes {
        let n = ep.len();
        let value = |i: usize| {
            if i == n {
                ep.terminal_utility
            } else {
                f[i] * ep.wealth_pow[i] / spec.p
            }
        };
        let mut v_i = value(0);
        for i in 0..n {
            let v_next = value(i + 1);
            let dt = ep.times[i + 1] - ep.times[i];
            let wp = ep.wealth_pow[i];
            let score = log_density_grad(ep.actions[i], phi, ep.f_behaviour[i], spec);
            let td = v_next - v_i + spec.gamma * wp * ep.entropy[i] * dt;
            grad[0] += score[0] * td;
            grad[1] += score[1] * td + spec.gamma * wp * 0.5 * dt;
            v_i = v_next;
        }
    }
    let n = batch.episodes.len() as f64;
    [grad[0] / n, grad[1] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{generate_episodes, TrainingConfig};

    fn synthetic() -> EpisodeBatch {
        // three steps at constant wealth 1
        EpisodeBatch {
            episodes: vec![Episode {
                times: vec![0.0, 0.5, 1.0, 1.5],
                actions: vec![0.1, 0.2, 0.3],
                wealth: vec![1.0; 4],
                wealth_pow: vec![1.0; 4],
                f_behaviour: vec![1.0; 3],
                entropy: vec![0.2, 0.4, 0.6],
                terminal_utility: 2.0,
            }],
            rejected: 0,
        }
    }

    #[test]
    fn hand_computed_gradient() {
        let spec = ExplorationSpec::new(0.5, 0.1, crate::Beta::Shannon).unwrap();
        let batch = synthetic();
        // theta = 0: V_i = U(1) = 2
        // tails: γ Δt H: 0.01, 0.02, 0.03 -> cumulative from i: 0.06, 0.05, 0.03
        let d = martingale_residuals(&batch.episodes[0], &[0.0], &spec, 1.5);
        let expected = [0.06, 0.05, 0.03];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        // -Σ D_i V_i (T - t_i) Δt = -(0.06·2·1.5 + 0.05·2·1 + 0.03·2·0.5)·0.5
        let g = martingale_loss_gradient(&batch, &[0.0], &spec, 1.5);
        assert!((g[0] + 0.5 * (0.18 + 0.1 + 0.03)).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let spec = ExplorationSpec::new(0.5, 0.1, crate::Beta::Shannon).unwrap();
        let mut batch = synthetic();
        batch.episodes[0].entropy = vec![0.0; 3];
        let g = martingale_loss_gradient(&batch, &[0.0, 0.0], &spec, 1.5);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn ml_gradient_matches_fd() {
        let cfg = TrainingConfig::default();
        let phi = PolicyParams::new(0.4, 0.7);
        let batch = generate_episodes(&cfg, &phi, &[0.1, -0.05], 8, 2).unwrap();
        let theta = [0.12, 0.03];
        let g = martingale_loss_gradient(&batch, &theta, &cfg.spec, 1.0);
        let h = 1e-5;
        for k in 0..2 {
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fd = (martingale_loss(&batch, &up, &cfg.spec, 1.0) - martingale_loss(&batch, &dn, &cfg.spec, 1.0)) / (2.0 * h);
            assert!(((fd - g[k]) / g[k]).abs() < 1e-6, "{fd} {}", g[k]);
        }
    }
}
