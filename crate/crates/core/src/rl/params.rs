use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::policy::{Beta, ExplorationSpec};

/// Critic coefficients `θ_1..θ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueParams {
    pub theta: Vec<f64>,
}

impl ValueParams {
    pub fn zeros(n: usize) -> Self {
        Self { theta: vec![0.0; n] }
    }

    pub fn f(&self, t: f64, horizon: f64) -> f64 {
        f_theta(&self.theta, t, horizon)
    }
}

/// Actor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub phi1: f64,
    pub phi2: f64,
}

impl PolicyParams {
    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self { phi1, phi2 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.phi1, self.phi2]
    }
}

/// `((μ-r)/σ², -log σ²)`: the actor parameters of the optimal policy.
pub fn true_phi(market: &MarketParams) -> PolicyParams {
    let s2 = market.sigma * market.sigma;
    PolicyParams::new(market.risk_premium() / s2, -s2.ln())
}

/// `f^θ(t) = exp(Σ_{i=1}^n θ_i (T - t)^i)`.
pub fn f_theta(theta: &[f64], t: f64, horizon: f64) -> f64 {
    let tau = horizon - t;
    let mut pow = 1.0;
    let mut exponent = 0.0;
    for th in theta {
        pow *= tau;
        exponent += th * pow;
    }
    exponent.exp()
}

/// `∂f^θ/∂θ_i = f^θ(t) (T - t)^i`.
pub fn f_theta_grad(theta: &[f64], t: f64, horizon: f64) -> Vec<f64> {
    let f = f_theta(theta, t, horizon);
    let tau = horizon - t;
    let mut pow = 1.0;
    theta
        .iter()
        .map(|_| {
            pow *= tau;
            f * pow
        })
        .collect()
}

pub fn policy_mean(phi: &PolicyParams, p: f64) -> f64 {
    phi.phi1 / (1.0 - p)
}

/// `γ e^{φ2} / ((1-p) f)` with `f = f^θ(t)`.
pub fn policy_variance(phi: &PolicyParams, f: f64, spec: &ExplorationSpec) -> f64 {
    spec.gamma * phi.phi2.exp() / ((1.0 - spec.p) * f)
}

/// `½ log(2πe v)`
pub fn gaussian_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance).ln()
}

/// `u = φ1/(1-p) + √(γ e^{φ2} / ((1-p) f^θ(t))) · noise`.
pub fn sample_action(
    phi: &PolicyParams,
    theta: &[f64],
    t: f64,
    horizon: f64,
    spec: &ExplorationSpec,
    noise: f64,
) -> Result<f64> {
    if spec.beta != Beta::Shannon {
        return Err(Error::Unsupported("the learner covers Shannon entropy only".into()));
    }
    let f = f_theta(theta, t, horizon);
    Ok(policy_mean(phi, spec.p) + policy_variance(phi, f, spec).sqrt() * noise)
}

pub fn log_density(u: f64, phi: &PolicyParams, f: f64, spec: &ExplorationSpec) -> f64 {
    let v = policy_variance(phi, f, spec);
    let x = u - policy_mean(phi, spec.p);
    -0.5 * (2.0 * PI * v).ln() - x * x / (2.0 * v)
}

/// `(∂ log π / ∂φ1, ∂ log π / ∂φ2)` at action `u`.
pub fn log_density_grad(u: f64, phi: &PolicyParams, f: f64, spec: &ExplorationSpec) -> [f64; 2] {
    let (p, gamma) = (spec.p, spec.gamma);
    let x = u - policy_mean(phi, p);
    let k = (-phi.phi2).exp() * f / gamma;
    [k * x, (1.0 - p) * k / 2.0 * x * x - 0.5]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_theta_normalization() {
        assert_eq!(f_theta(&[0.0, 0.0], 0.3, 1.0), 1.0);
        assert_eq!(f_theta(&[1.7, -4.0], 1.0, 1.0), 1.0);
        assert!((f_theta(&[0.1, 0.2], 0.0, 1.0) - 0.3f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn f_theta_grad_fd() {
        let theta = [0.15, -0.07, 0.02];
        let g = f_theta_grad(&theta, 0.37, 1.0);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[i] += h;
            dn[i] -= h;
            let fd = (f_theta(&up, 0.37, 1.0) - f_theta(&dn, 0.37, 1.0)) / (2.0 * h);
            assert!(((fd - g[i]) / g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn action_examples() {
        let spec = ExplorationSpec::reference();
        let phi = PolicyParams::new(0.8, 4f64.ln());
        let u = sample_action(&phi, &[0.0, 0.0], 0.0, 1.0, &spec, 0.0).unwrap();
        assert!((u - 1.2).abs() < 1e-14);
        let phi = PolicyParams::new(0.8, 1.386);
        let v = policy_variance(&phi, 1.0, &spec);
        assert!((v - 0.3 * 1.386f64.exp() / (2.0 / 3.0)).abs() < 1e-14);
        assert!((v - 1.8).abs() < 1e-3);
        let tsallis = ExplorationSpec {
            beta: Beta::Tsallis3,
            ..spec
        };
        assert!(sample_action(&phi, &[0.0], 0.0, 1.0, &tsallis, 0.0).is_err());
    }

    #[test]
    fn score_at_mean() {
        let spec = ExplorationSpec::reference();
        let phi = PolicyParams::new(0.5, -0.3);
        let g = log_density_grad(policy_mean(&phi, spec.p), &phi, 1.3, &spec);
        assert_eq!(g, [0.0, -0.5]);
    }

    #[test]
    fn true_phi_reference() {
        let t = true_phi(&MarketParams::reference());
        assert!((t.phi1 - 0.8).abs() < 1e-15);
        assert!((t.phi2 - 4f64.ln()).abs() < 1e-15);
    }
}
