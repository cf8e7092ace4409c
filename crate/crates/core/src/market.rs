//! Market dynamics: the risky asset, classical wealth, exploratory wealth and
//! the discrete wealth update used when generating training episodes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Risk-free rate, drift and volatility of a single risky asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        let params = Self { r, mu, sigma };
        params.validate()?;
        Ok(params)
    }

    /// Default market of the reference experiments: `r = 0, μ = 0.2, σ = 0.5`.
    pub fn reference() -> Self {
        Self {
            r: 0.0,
            mu: 0.2,
            sigma: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.mu.is_finite()) {
            return Err(Error::invalid("r/mu", "must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn risk_premium(&self) -> f64 {
        self.mu - self.r
    }

    /// `(μ - r)² / σ²`, the squared Sharpe ratio.
    pub fn sharpe_sq(&self) -> f64 {
        let s = self.risk_premium() / self.sigma;
        s * s
    }
}

/// Uniform partition of `[t0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    #[serde(rename = "T")]
    pub end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, end: f64, n_steps: usize) -> Result<Self> {
        let grid = Self { t0, end, n_steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.end.is_finite() && self.end > self.t0) {
            return Err(Error::invalid("grid", format!("need T > t0, got [{}, {}]", self.t0, self.end)));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("grid.n_steps", "must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.end
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }
}

/// Values of a positive process on a [`TimeGrid`], one per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

pub type PricePath = Path;
pub type WealthPath = Path;

impl Path {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths hold n_steps + 1 values")
    }

    /// CSV with header `time,value`, 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut table = crate::output::CsvTable::new(&["time", "value"]);
        for (i, v) in self.values.iter().enumerate() {
            table.push(&[self.grid.time(i), *v]);
        }
        table.write(out)
    }
}

/// One step of the exact log-normal scheme for `dS = μ S dt + σ S dB`.
#[inline]
pub fn gbm_step(s: f64, mu: f64, sigma: f64, dt: f64, z: f64) -> f64 {
    s * ((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z).exp()
}

/// Stock path under the exact log-normal scheme, deterministic per seed.
pub fn simulate_stock(params: &MarketParams, s0: f64, grid: &TimeGrid, seed: u64) -> Result<PricePath> {
    params.validate()?;
    grid.validate()?;
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::invalid("s0", format!("must be positive, got {s0}")));
    }
    let mut rng = rng::stream(seed, 0);
    Ok(simulate_stock_with(params, s0, grid, &mut rng))
}

pub(crate) fn simulate_stock_with<R: Rng>(params: &MarketParams, s0: f64, grid: &TimeGrid, rng: &mut R) -> PricePath {
    let dt = grid.dt();
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    let mut s = s0;
    values.push(s);
    for _ in 0..grid.n_steps {
        let z: f64 = rng.sample(StandardNormal);
        s = gbm_step(s, params.mu, params.sigma, dt, z);
        values.push(s);
    }
    Path { grid: *grid, values }
}

/// Discrete self-financing update `w + r w dt + u w ΔS/S`.
///
/// The result may be non-positive; callers decide how to treat bankruptcy.
#[inline]
pub fn step_wealth(w: f64, u: f64, r: f64, dt: f64, stock_return: f64) -> f64 {
    w + r * w * dt + u * w * stock_return
}

/// Euler–Maruyama path of the classical wealth SDE under a constant fraction.
pub fn simulate_classical_wealth(
    params: &MarketParams,
    fraction: f64,
    grid: &TimeGrid,
    w0: f64,
    seed: u64,
) -> Result<WealthPath> {
    params.validate()?;
    grid.validate()?;
    let dt = grid.dt();
    let sq = dt.sqrt();
    let mut rng = rng::stream(seed, 0);
    let mut w = w0;
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    values.push(w);
    for _ in 0..grid.n_steps {
        let z: f64 = rng.sample(StandardNormal);
        w += (params.r + params.risk_premium() * fraction) * w * dt + params.sigma * fraction * w * sq * z;
        values.push(w);
    }
    Ok(Path { grid: *grid, values })
}

/// Exploratory wealth driven by the policy's first two raw moments.
///
/// Drift `[r + (μ - r) m1] W`, diffusion `σ W √m2`, integrated with the
/// exponential Euler scheme on `log W` so the path stays positive.
pub fn simulate_exploratory_wealth<M>(
    params: &MarketParams,
    moments: M,
    grid: &TimeGrid,
    w0: f64,
    seed: u64,
) -> Result<WealthPath>
where
    M: Fn(f64) -> (f64, f64),
{
    params.validate()?;
    grid.validate()?;
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(Error::invalid("w0", format!("must be positive, got {w0}")));
    }
    let coefs = exploratory_coefficients(params, &moments, grid)?;
    let mut rng = rng::stream(seed, 0);
    Ok(exploratory_path_with(&coefs, grid, w0, &mut rng))
}

/// Per-step `(log drift · dt, diffusion · √dt)` for the exponential Euler scheme.
pub(crate) fn exploratory_coefficients<M>(params: &MarketParams, moments: &M, grid: &TimeGrid) -> Result<Vec<(f64, f64)>>
where
    M: Fn(f64) -> (f64, f64),
{
    let dt = grid.dt();
    (0..grid.n_steps)
        .map(|i| {
            let t = grid.time(i);
            let (m1, m2) = moments(t);
            let m1_sq = m1 * m1;
            if m2 < m1_sq - 1e-12 * m1_sq.max(1.0) {
                return Err(Error::MomentOrder { t, m2, m1_sq });
            }
            let drift = params.r + params.risk_premium() * m1;
            let diff_sq = params.sigma * params.sigma * m2.max(0.0);
            Ok(((drift - 0.5 * diff_sq) * dt, (diff_sq * dt).sqrt()))
        })
        .collect()
}

pub(crate) fn exploratory_path_with<R: Rng>(coefs: &[(f64, f64)], grid: &TimeGrid, w0: f64, rng: &mut R) -> WealthPath {
    let mut log_w = w0.ln();
    let mut values = Vec::with_capacity(coefs.len() + 1);
    values.push(w0);
    for &(mean, sd) in coefs {
        let z: f64 = rng.sample(StandardNormal);
        log_w += mean + sd * z;
        values.push(log_w.exp());
    }
    Path { grid: *grid, values }
}

/// Terminal values of `n_paths` independent exploratory wealth paths; path
/// `k` uses stream `k` of `seed`.
pub fn exploratory_terminal_wealth<M>(
    params: &MarketParams,
    moments: M,
    grid: &TimeGrid,
    w0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    M: Fn(f64) -> (f64, f64),
{
    use rayon::prelude::*;
    params.validate()?;
    grid.validate()?;
    let coefs = exploratory_coefficients(params, &moments, grid)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let mut log_w = w0.ln();
            for &(mean, sd) in &coefs {
                let z: f64 = rng.sample(StandardNormal);
                log_w += mean + sd * z;
            }
            log_w.exp()
        })
        .collect())
}
