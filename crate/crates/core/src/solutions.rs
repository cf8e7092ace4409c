//! Closed-form and semi-closed-form solutions: the classical Merton
//! baseline, exploratory value functions, optimal policies, the exploration
//! cost and vanishing-exploration diagnostics.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, TimeGrid};
use crate::ode::{self, OdeSolution, WellPosednessReport};
use crate::policy::{Beta, ExplorationSpec, GaussianPolicy, Policy, SemicirclePolicy};
use crate::{quadrature, rng, utility};

/// Default reversed-time RK4 step as a fraction of the horizon.
pub const DEFAULT_STEPS: f64 = 1e4;

/// Merton fraction `(μ - r) / (σ² (1 - p))`.
pub fn merton_strategy(market: &MarketParams, p: f64) -> Result<f64> {
    market.validate()?;
    if !(p < 1.0) {
        return Err(Error::invalid("p", format!("must be < 1, got {p}")));
    }
    Ok(market.risk_premium() / (market.sigma * market.sigma * (1.0 - p)))
}

/// Classical value function under the Merton strategy.
pub fn merton_value(market: &MarketParams, p: f64, t: f64, horizon: f64, w: f64) -> Result<f64> {
    market.validate()?;
    if !(p < 1.0) {
        return Err(Error::invalid("p", format!("must be < 1, got {p}")));
    }
    if !(w > 0.0) {
        return Err(Error::invalid("w", format!("must be positive, got {w}")));
    }
    if t > horizon {
        return Err(Error::invalid("t", format!("must be <= T = {horizon}, got {t}")));
    }
    let tau = horizon - t;
    Ok(if p == 0.0 {
        w.ln() + (market.r + market.sharpe_sq() / 2.0) * tau
    } else {
        utility(w, p) * ode::zero_exploration_y(market, p, tau)
    })
}

#[derive(Debug, Clone)]
enum ValueKind {
    /// `v = f(t) w^p / p` with `f(t) = y(T - t)`.
    Reduced {
        solution: OdeSolution,
        report: WellPosednessReport,
    },
    /// `p = 0`: `v = log w + rate (T - t)`.
    LogUtility { rate: f64 },
}

/// Exploratory optimal value function for one `(market, spec, T)`.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    market: MarketParams,
    spec: ExplorationSpec,
    horizon: f64,
    kind: ValueKind,
}

impl ValueFunction {
    /// Solves the reduced ODE with the default step `T / 10^4`.
    pub fn new(market: &MarketParams, spec: &ExplorationSpec, horizon: f64) -> Result<Self> {
        Self::with_step(market, spec, horizon, horizon / DEFAULT_STEPS)
    }

    pub fn with_step(market: &MarketParams, spec: &ExplorationSpec, horizon: f64, step: f64) -> Result<Self> {
        market.validate()?;
        spec.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("T", format!("must be positive, got {horizon}")));
        }
        let kind = if spec.p == 0.0 {
            let base = market.r + market.sharpe_sq() / 2.0;
            let (gamma, sigma) = (spec.gamma, market.sigma);
            let rate = match spec.beta {
                Beta::Shannon => base + gamma / 2.0 * (2.0 * PI * gamma / (sigma * sigma)).ln(),
                Beta::Tsallis3 => base + gamma / 2.0 - sigma * (3.0 * gamma).sqrt() / (2.0 * PI),
            };
            ValueKind::LogUtility { rate }
        } else {
            let coeffs = ode::reduced_coeffs(market, spec)?;
            let solution = ode::solve_reduced_ode(&coeffs, horizon, step)?;
            let report = ode::wellposedness_verdict(&solution, horizon)?;
            ValueKind::Reduced { solution, report }
        };
        Ok(Self {
            market: *market,
            spec: *spec,
            horizon,
            kind,
        })
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn spec(&self) -> &ExplorationSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn solution(&self) -> Option<&OdeSolution> {
        match &self.kind {
            ValueKind::Reduced { solution, .. } => Some(solution),
            ValueKind::LogUtility { .. } => None,
        }
    }

    pub fn report(&self) -> Option<&WellPosednessReport> {
        match &self.kind {
            ValueKind::Reduced { report, .. } => Some(report),
            ValueKind::LogUtility { .. } => None,
        }
    }

    /// Left end of the validity interval `(tau, T]`, if the problem is ill-posed early on.
    pub fn tau(&self) -> Option<f64> {
        self.report().and_then(|r| r.tau)
    }

    /// Rejects `t` outside `(tau, T]` (or `[0, T]` when well-posed everywhere).
    pub fn check_time(&self, t: f64) -> Result<()> {
        if !(t <= self.horizon) || t < 0.0 {
            return Err(Error::invalid("t", format!("must lie in [0, {}], got {t}", self.horizon)));
        }
        if let Some(tau) = self.tau() {
            if t <= tau {
                return Err(Error::IllPosed {
                    t,
                    tau,
                    horizon: self.horizon,
                });
            }
        }
        Ok(())
    }

    /// `f(t)`; identically 1 for log utility.
    pub fn f(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        match &self.kind {
            ValueKind::Reduced { solution, .. } => {
                let s = (self.horizon - t).max(0.0);
                solution.value_at(s).ok_or(Error::IllPosed {
                    t,
                    tau: self.tau().unwrap_or(0.0),
                    horizon: self.horizon,
                })
            }
            ValueKind::LogUtility { .. } => Ok(1.0),
        }
    }

    /// `V(t, w)`.
    pub fn value(&self, t: f64, w: f64) -> Result<f64> {
        if !(w > 0.0) {
            return Err(Error::invalid("w", format!("must be positive, got {w}")));
        }
        let f = self.f(t)?;
        Ok(match &self.kind {
            ValueKind::Reduced { .. } => f * utility(w, self.spec.p),
            ValueKind::LogUtility { rate } => w.ln() + rate * (self.horizon - t),
        })
    }

    /// `∫_t^T ds / f(s)`: the rule on the ODE grid plus Gauss–Kronrod on a
    /// trailing partial cell.
    pub fn integral_inverse_f(&self, t: f64, rule: QuadRule) -> Result<f64> {
        self.check_time(t)?;
        let Some(solution) = self.solution() else {
            return Ok(self.horizon - t);
        };
        let span = self.horizon - t;
        let h = solution.step;
        let mut k = (span / h).floor() as usize;
        if ((k + 1) as f64 * h - span).abs() <= 1e-9 * h {
            k += 1;
        }
        let k = k.min(solution.y.len() - 1);
        let inv: Vec<f64> = solution.y[..=k].iter().map(|y| 1.0 / y).collect();
        let grid_part = match rule {
            QuadRule::Simpson => quadrature::simpson(&inv, h),
            QuadRule::Trapezoid => quadrature::trapezoid(&inv, h),
        };
        let start = solution.times[k];
        let tail = if span > start {
            quadrature::integrate(
                |s| 1.0 / solution.value_at(s.min(span)).unwrap_or(f64::NAN),
                start,
                span,
                1e-14,
            )
            .value
        } else {
            0.0
        };
        Ok(grid_part + tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    Simpson,
    Trapezoid,
}

fn require_beta(vf: &ValueFunction, beta: Beta) -> Result<()> {
    if vf.spec.beta != beta {
        return Err(Error::Unsupported(format!(
            "value function was built for beta = {}, requested beta = {}",
            u8::from(vf.spec.beta),
            u8::from(beta)
        )));
    }
    Ok(())
}

/// Gaussian optimal policy under Shannon entropy.
pub fn optimal_policy_beta1(vf: &ValueFunction, t: f64) -> Result<GaussianPolicy> {
    require_beta(vf, Beta::Shannon)?;
    let f = vf.f(t)?;
    let p = vf.spec.p;
    let s2 = vf.market.sigma * vf.market.sigma;
    GaussianPolicy::new(merton_strategy(&vf.market, p)?, vf.spec.gamma / ((1.0 - p) * s2 * f))
}

/// Semicircle optimal policy under Tsallis-3 entropy.
pub fn optimal_policy_beta3(vf: &ValueFunction, t: f64) -> Result<SemicirclePolicy> {
    require_beta(vf, Beta::Tsallis3)?;
    let f = vf.f(t)?;
    let p = vf.spec.p;
    let s2 = vf.market.sigma * vf.market.sigma;
    let r_sq = 2.0 / PI * (3.0 * vf.spec.gamma / (s2 * (1.0 - p) * f)).sqrt();
    SemicirclePolicy::new(merton_strategy(&vf.market, p)?, r_sq.sqrt())
}

/// Optimal policy for the value function's entropy index.
pub fn optimal_policy(vf: &ValueFunction, t: f64) -> Result<Policy> {
    Ok(match vf.spec.beta {
        Beta::Shannon => optimal_policy_beta1(vf, t)?.into(),
        Beta::Tsallis3 => optimal_policy_beta3(vf, t)?.into(),
    })
}

/// `V(t, w) = f(t) w^p / p`.
pub fn exploratory_value(vf: &ValueFunction, t: f64, w: f64) -> Result<f64> {
    vf.value(t, w)
}

/// Relative exploration cost `|1 - exp{-(pγ/2) ∫_t^T ds / f(s)}|`.
///
/// The closed form covers Shannon entropy with `p ≠ 0`; other settings are
/// available through [`exploration_cost_mc`].
pub fn exploration_cost(vf: &ValueFunction, t: f64) -> Result<f64> {
    exploration_cost_with(vf, t, QuadRule::Simpson)
}

pub fn exploration_cost_with(vf: &ValueFunction, t: f64, rule: QuadRule) -> Result<f64> {
    require_beta(vf, Beta::Shannon)?;
    if vf.spec.p == 0.0 {
        return Err(Error::Unsupported(
            "closed-form exploration cost needs p != 0; use the Monte Carlo estimate".into(),
        ));
    }
    let integral = vf.integral_inverse_f(t, rule)?;
    Ok((1.0 - (-(vf.spec.p * vf.spec.gamma / 2.0) * integral).exp()).abs())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        Self {
            mean,
            std_err: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|x - mean| ≤ k · std_err`.
    pub fn contains(&self, x: f64, k: f64) -> bool {
        (x - self.mean).abs() <= k * self.std_err
    }
}

/// Monte Carlo exploration cost from time 0 at wealth `w0`.
///
/// Classical wealth under the Merton fraction and exploratory wealth under
/// the optimal policy's moments share their Brownian increments; the ratio
/// of mean utilities gets a delta-method standard error.
pub fn exploration_cost_mc(vf: &ValueFunction, w0: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(Error::invalid("n_paths", "need at least 2 paths"));
    }
    if !(w0 > 0.0) {
        return Err(Error::invalid("w0", format!("must be positive, got {w0}")));
    }
    vf.check_time(0.0)?;
    let market = vf.market;
    let p = vf.spec.p;
    let grid = TimeGrid::new(0.0, vf.horizon, n_steps)?;
    let dt = grid.dt();
    let u_hat = merton_strategy(&market, p)?;
    let s2 = market.sigma * market.sigma;
    let cl_mean = (market.r + market.risk_premium() * u_hat - 0.5 * s2 * u_hat * u_hat) * dt;
    let cl_sd = market.sigma * u_hat.abs() * dt.sqrt();
    // midpoint policy variance on each step
    let ex: Vec<(f64, f64)> = (0..n_steps)
        .map(|i| {
            let t = grid.time(i) + 0.5 * dt;
            let var = optimal_policy(vf, t)?.variance();
            let m2 = u_hat * u_hat + var;
            let mean = (market.r + market.risk_premium() * u_hat - 0.5 * s2 * m2) * dt;
            Ok((mean, (s2 * m2 * dt).sqrt()))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let (mut lc, mut le) = (w0.ln(), w0.ln());
            for &(m, sd) in &ex {
                let z: f64 = rng.sample(StandardNormal);
                lc += cl_mean + cl_sd * z;
                le += m + sd * z;
            }
            (utility(lc.exp(), p), utility(le.exp(), p))
        })
        .collect();
    let n = n_paths as f64;
    let mc = pairs.iter().map(|x| x.0).sum::<f64>() / n;
    let me = pairs.iter().map(|x| x.1).sum::<f64>() / n;
    let (mut vc, mut ve, mut cov) = (0.0, 0.0, 0.0);
    for &(c, e) in &pairs {
        vc += (c - mc) * (c - mc);
        ve += (e - me) * (e - me);
        cov += (c - mc) * (e - me);
    }
    let denom = n - 1.0;
    let (vc, ve, cov) = (vc / denom, ve / denom, cov / denom);
    let ratio = me / mc;
    // Var(me/mc) ≈ (ve - 2 ratio cov + ratio² vc) / (n mc²)
    let var_ratio = (ve - 2.0 * ratio * cov + ratio * ratio * vc) / (n * mc * mc);
    Ok(McEstimate {
        mean: (1.0 - ratio).abs(),
        std_err: var_ratio.max(0.0).sqrt(),
        n: n_paths,
    })
}

/// Simulated reward `E[U(W_T) + ∫ γ W_s^p H(π_s) ds]` of a wealth-independent
/// policy started at `(0, w0)`.
pub fn simulate_reward<P>(
    market: &MarketParams,
    spec: &ExplorationSpec,
    policy_at: P,
    grid: &TimeGrid,
    w0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate>
where
    P: Fn(f64) -> Result<Policy>,
{
    market.validate()?;
    spec.validate()?;
    grid.validate()?;
    let dt = grid.dt();
    let s2 = market.sigma * market.sigma;
    let steps: Vec<(f64, f64, f64)> = (0..grid.n_steps)
        .map(|i| {
            let pol = policy_at(grid.time(i))?;
            let (m1, m2) = pol.moments();
            let mean = (market.r + market.risk_premium() * m1 - 0.5 * s2 * m2) * dt;
            Ok((mean, (s2 * m2 * dt).sqrt(), pol.entropy(spec.beta)?))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let mut lw = w0.ln();
            let mut running = 0.0;
            for &(m, sd, ent) in &steps {
                running += spec.gamma * (spec.p * lw).exp() * ent * dt;
                let z: f64 = rng.sample(StandardNormal);
                lw += m + sd * z;
            }
            utility(lw.exp(), spec.p) + running
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

/// One row of the vanishing-exploration report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub gamma: f64,
    /// `max_s |y^γ(s) - y⁰(s)|`
    pub max_y_gap: f64,
    /// `sup |V^γ - V^cl| / |V^cl|` over a `(t, w)` grid
    pub max_rel_value_gap: f64,
    pub variance_t0: f64,
    pub cost_t0: f64,
    /// `|ψ^γ(ξ) - e^{iξû}|` at `ξ = 1, 2, 5`
    pub cf_gap_1: f64,
    pub cf_gap_2: f64,
    pub cf_gap_5: f64,
}

pub const CF_POINTS: [f64; 3] = [1.0, 2.0, 5.0];

/// Shannon-entropy diagnostics along a decreasing temperature sequence, `0 < p < 1`.
pub fn convergence_report(
    market: &MarketParams,
    p: f64,
    gammas: &[f64],
    horizon: f64,
    step: f64,
) -> Result<Vec<ConvergenceRow>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    if gammas.iter().any(|g| !(*g > 0.0)) || gammas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("gammas", "need a strictly decreasing positive sequence"));
    }
    let w_grid = [0.5, 1.0, 1.5, 2.0];
    gammas
        .iter()
        .map(|&gamma| {
            let spec = ExplorationSpec::new(p, gamma, Beta::Shannon)?;
            let vf = ValueFunction::with_step(market, &spec, horizon, step)?;
            let sol = vf.solution().expect("p != 0");
            let max_y_gap = sol
                .times
                .iter()
                .zip(&sol.y)
                .map(|(&s, &y)| (y - ode::zero_exploration_y(market, p, s)).abs())
                .fold(0.0, f64::max);
            let mut max_rel = 0.0f64;
            for i in 0..=50 {
                let t = horizon * i as f64 / 50.0;
                for &w in &w_grid {
                    let v = vf.value(t, w)?;
                    let cl = merton_value(market, p, t, horizon, w)?;
                    max_rel = max_rel.max(((v - cl) / cl).abs());
                }
            }
            let variance_t0 = optimal_policy_beta1(&vf, 0.0)?.variance;
            // |e^{iξû}(e^{-ξ² var / 2} - 1)| = 1 - e^{-ξ² var / 2}
            let cf = |xi: f64| -(-xi * xi * variance_t0 / 2.0).exp_m1();
            Ok(ConvergenceRow {
                gamma,
                max_y_gap,
                max_rel_value_gap: max_rel,
                variance_t0,
                cost_t0: exploration_cost(&vf, 0.0)?,
                cf_gap_1: cf(CF_POINTS[0]),
                cf_gap_2: cf(CF_POINTS[1]),
                cf_gap_5: cf(CF_POINTS[2]),
            })
        })
        .collect()
}

/// Finite-difference HJB residuals of `v = f(t) w^p / p` on a `(t, w)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjbResidual {
    pub max_abs: f64,
    pub at_t: f64,
    pub at_w: f64,
}

const FD_STEP: f64 = 1e-4;

fn derivatives(vf: &ValueFunction, t: f64, w: f64) -> Result<(f64, f64, f64)> {
    let h = FD_STEP;
    let horizon = vf.horizon;
    let lower = vf.tau().unwrap_or(0.0);
    let v = |t: f64, w: f64| vf.value(t, w);
    let v_t = if t + h > horizon {
        (3.0 * v(t, w)? - 4.0 * v(t - h, w)? + v(t - 2.0 * h, w)?) / (2.0 * h)
    } else if t - h < lower.max(0.0) {
        (-3.0 * v(t, w)? + 4.0 * v(t + h, w)? - v(t + 2.0 * h, w)?) / (2.0 * h)
    } else {
        (v(t + h, w)? - v(t - h, w)?) / (2.0 * h)
    };
    let (vp, v0, vm) = (v(t, w + h)?, v(t, w)?, v(t, w - h)?);
    Ok((v_t, (vp - vm) / (2.0 * h), (vp - 2.0 * v0 + vm) / (h * h)))
}

fn residual_grid<F>(vf: &ValueFunction, n: usize, w_range: (f64, f64), residual: F) -> Result<HjbResidual>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if vf.solution().is_none() {
        return Err(Error::Unsupported("HJB residual needs the reduced ODE (p != 0)".into()));
    }
    let lower = vf.tau().unwrap_or(0.0);
    let mut worst = HjbResidual {
        max_abs: 0.0,
        at_t: 0.0,
        at_w: 0.0,
    };
    for i in 0..n {
        // stay strictly inside the validity interval
        let frac = i as f64 / (n - 1) as f64;
        let t = if vf.tau().is_some() {
            lower + (vf.horizon - lower) * (0.05 + 0.95 * frac)
        } else {
            vf.horizon * frac
        };
        for j in 0..n {
            let w = w_range.0 + (w_range.1 - w_range.0) * j as f64 / (n - 1) as f64;
            let r = residual(t, w)?.abs();
            if !(r <= worst.max_abs) {
                worst = HjbResidual {
                    max_abs: r,
                    at_t: t,
                    at_w: w,
                };
            }
        }
    }
    Ok(worst)
}

/// Residual of the Shannon HJB equation
/// `v_t + r w v_w - (μ-r)² v_w² / (2σ² v_ww) + (γ w^p / 2) log(-2πγ w^{p-2} / (σ² v_ww))`.
pub fn hjb_residual_beta1(vf: &ValueFunction, n: usize, w_range: (f64, f64)) -> Result<HjbResidual> {
    require_beta(vf, Beta::Shannon)?;
    let m = vf.market;
    let (p, gamma) = (vf.spec.p, vf.spec.gamma);
    let s2 = m.sigma * m.sigma;
    residual_grid(vf, n, w_range, |t, w| {
        let (v_t, v_w, v_ww) = derivatives(vf, t, w)?;
        let wp = w.powf(p);
        Ok(v_t + m.r * w * v_w - 0.5 * m.risk_premium().powi(2) * v_w * v_w / (s2 * v_ww)
            + 0.5 * gamma * wp * (-2.0 * PI * gamma * w.powf(p - 2.0) / (s2 * v_ww)).ln())
    })
}

/// Residual of the Tsallis-3 HJB equation evaluated at the semicircle policy:
/// `v_t + r w v_w + (μ-r) w v_w m1 + ½ σ² w² v_ww m2 + γ w^p ½ (1 - ∫π³)`.
pub fn hjb_residual_beta3(vf: &ValueFunction, n: usize, w_range: (f64, f64)) -> Result<HjbResidual> {
    require_beta(vf, Beta::Tsallis3)?;
    let m = vf.market;
    let (p, gamma) = (vf.spec.p, vf.spec.gamma);
    let s2 = m.sigma * m.sigma;
    residual_grid(vf, n, w_range, |t, w| {
        let (v_t, v_w, v_ww) = derivatives(vf, t, w)?;
        let pol = optimal_policy_beta3(vf, t)?;
        let (m1, m2) = pol.moments();
        Ok(v_t + m.r * w * v_w + m.risk_premium() * w * v_w * m1 + 0.5 * s2 * w * w * v_ww * m2
            + gamma * w.powf(p) * 0.5 * (1.0 - pol.cube_integral()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_vf(beta: Beta) -> ValueFunction {
        let spec = ExplorationSpec {
            beta,
            ..ExplorationSpec::reference()
        };
        ValueFunction::new(&MarketParams::reference(), &spec, 1.0).unwrap()
    }

    #[test]
    fn merton_examples() {
        let m = MarketParams::reference();
        assert!((merton_strategy(&m, 1.0 / 3.0).unwrap() - 1.2).abs() < 1e-14);
        assert!((merton_strategy(&m, 0.0).unwrap() - 0.8).abs() < 1e-15);
        let flat = MarketParams { r: 0.03, mu: 0.03, sigma: 0.2 };
        assert_eq!(merton_strategy(&flat, 0.5).unwrap(), 0.0);
        let v = merton_value(&m, 1.0 / 3.0, 0.0, 1.0, 1.0).unwrap();
        assert!((v - 3.0 * 0.04f64.exp()).abs() < 1e-13);
        assert!((merton_value(&m, -2.0, 1.0, 1.0, 2.0).unwrap() - utility(2.0, -2.0)).abs() < 1e-15);
        let bond = merton_value(&flat, 0.5, 0.0, 2.0, 1.5).unwrap();
        assert!((bond - utility(1.5 * (0.03f64 * 2.0).exp(), 0.5)).abs() < 1e-13);
    }

    #[test]
    fn reference_policies() {
        let vf = reference_vf(Beta::Shannon);
        let at_t = optimal_policy_beta1(&vf, 1.0).unwrap();
        assert!((at_t.mean - 1.2).abs() < 1e-14);
        assert!((at_t.variance - 1.8).abs() < 1e-12);
        let at_0 = optimal_policy_beta1(&vf, 0.0).unwrap();
        assert_eq!(at_0.mean, at_t.mean);
        let vf3 = reference_vf(Beta::Tsallis3);
        let sc = optimal_policy_beta3(&vf3, 0.5).unwrap();
        assert!((sc.center - 1.2).abs() < 1e-14);
        let f = vf3.f(0.5).unwrap();
        let expected = (3.0 * 0.3 / (0.25 * (2.0 / 3.0) * f)).sqrt() / (2.0 * PI);
        assert!((sc.variance() - expected).abs() < 1e-13);
        assert!(optimal_policy_beta3(&vf, 0.5).is_err());
    }

    #[test]
    fn terminal_value_is_utility() {
        for beta in [Beta::Shannon, Beta::Tsallis3] {
            let vf = reference_vf(beta);
            for w in [0.3, 1.0, 4.0] {
                assert_eq!(vf.value(1.0, w).unwrap(), utility(w, 1.0 / 3.0));
            }
        }
    }

    #[test]
    fn log_utility_branch() {
        let spec = ExplorationSpec::new(0.0, 0.3, Beta::Shannon).unwrap();
        let vf = ValueFunction::new(&MarketParams::reference(), &spec, 1.0).unwrap();
        let pol = optimal_policy_beta1(&vf, 0.2).unwrap();
        assert!((pol.mean - 0.8).abs() < 1e-15);
        assert!((pol.variance - 1.2).abs() < 1e-14);
        assert_eq!(vf.value(1.0, 2.0).unwrap(), 2f64.ln());
        assert!(exploration_cost(&vf, 0.0).is_err());
    }

    #[test]
    fn cost_vanishes_at_horizon() {
        let vf = reference_vf(Beta::Shannon);
        assert_eq!(exploration_cost(&vf, 1.0).unwrap(), 0.0);
        let c0 = exploration_cost(&vf, 0.0).unwrap();
        let ct = exploration_cost_with(&vf, 0.0, QuadRule::Trapezoid).unwrap();
        assert!((c0 - ct).abs() < 1e-8);
        let mid = exploration_cost(&vf, 0.43217).unwrap();
        assert!(mid > 0.0 && mid < c0);
    }

    #[test]
    fn integral_of_constant_solution() {
        // h(1) = 0 keeps y ≡ 1
        let market = MarketParams::reference();
        let spec = ExplorationSpec::reference();
        let mut vf = ValueFunction::new(&market, &spec, 1.0).unwrap();
        if let ValueKind::Reduced { solution, .. } = &mut vf.kind {
            solution.y.iter_mut().for_each(|y| *y = 1.0);
            solution.coeffs = ode::OdeCoefficients::shannon(0.0, 1.0, 0.0);
        }
        let v = vf.integral_inverse_f(0.123456, QuadRule::Simpson).unwrap();
        assert!((v - (1.0 - 0.123456)).abs() < 1e-12);
    }

    #[test]
    fn ill_posed_queries_rejected() {
        let market = MarketParams { r: -0.5, mu: -0.5, sigma: 0.3 };
        let spec = ExplorationSpec::new(-1.0, 0.5, Beta::Shannon).unwrap();
        let vf = ValueFunction::new(&market, &spec, 5.0).unwrap();
        let tau = vf.tau().expect("ill-posed early");
        assert!(matches!(vf.f(tau), Err(Error::IllPosed { .. })));
        assert!(matches!(optimal_policy_beta1(&vf, tau * 0.5), Err(Error::IllPosed { .. })));
        assert!(vf.f(tau + 1e-3).unwrap() > 0.0);
    }

    #[test]
    fn residuals_small_on_reference() {
        let r1 = hjb_residual_beta1(&reference_vf(Beta::Shannon), 11, (0.5, 2.0)).unwrap();
        assert!(r1.max_abs < 1e-6, "{r1:?}");
        let r3 = hjb_residual_beta3(&reference_vf(Beta::Tsallis3), 11, (0.5, 2.0)).unwrap();
        assert!(r3.max_abs < 1e-6, "{r3:?}");
    }

    #[test]
    fn convergence_rows_shrink() {
        let rows = convergence_report(&MarketParams::reference(), 1.0 / 3.0, &[0.3, 0.1, 0.03], 1.0, 1e-3).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].max_y_gap < w[0].max_y_gap);
            assert!(w[1].variance_t0 < w[0].variance_t0);
            assert!(w[1].cost_t0 < w[0].cost_t0);
            assert!(w[1].cf_gap_5 < w[0].cf_gap_5);
        }
        assert!(convergence_report(&MarketParams::reference(), 1.0 / 3.0, &[0.1, 0.3], 1.0, 1e-3).is_err());
    }
}
