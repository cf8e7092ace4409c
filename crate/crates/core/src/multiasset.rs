//! Closed forms for `d` risky assets with volatility matrix `σ` and
//! covariance `Σ = σσᵀ`.
//!
//! The semicircle policy lives on the ellipsoid `(u-θ)ᵀ Σ (u-θ) ≤ R²`, so its
//! radius is measured in the `Σ^{1/2}` metric; for `d = 1` the support
//! half-width in `u` is `R / σ`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::ode::{solve_reduced_ode, FieldForm, OdeCoefficients, OdeSolution};
use crate::policy::{Beta, ExplorationSpec};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MultiMarketJson {
    r: f64,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

/// Market with `d` risky assets: `dS = S (μ dt + σ dB)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MultiMarketJson", into = "MultiMarketJson")]
pub struct MultiMarketParams {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl TryFrom<MultiMarketJson> for MultiMarketParams {
    type Error = Error;

    fn try_from(raw: MultiMarketJson) -> Result<Self> {
        let d = raw.mu.len();
        if raw.sigma.len() != d || raw.sigma.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("sigma", format!("must be a {d}x{d} matrix")));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| raw.sigma[i][j]);
        Self::new(raw.r, DVector::from_vec(raw.mu), sigma)
    }
}

impl From<MultiMarketParams> for MultiMarketJson {
    fn from(m: MultiMarketParams) -> Self {
        let d = m.dim();
        MultiMarketJson {
            r: m.r,
            mu: m.mu.iter().copied().collect(),
            sigma: (0..d).map(|i| (0..d).map(|j| m.sigma[(i, j)]).collect()).collect(),
        }
    }
}

impl MultiMarketParams {
    pub fn new(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let m = Self { r, mu, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mu.len();
        if d == 0 {
            return Err(Error::invalid("mu", "need at least one asset"));
        }
        if self.sigma.nrows() != d || self.sigma.ncols() != d {
            return Err(Error::SingularMatrix);
        }
        if !self.r.is_finite() || self.mu.iter().chain(self.sigma.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("market", "entries must be finite"));
        }
        let scale = self.sigma.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let det = self.sigma.clone().lu().determinant();
        if scale == 0.0 || det.abs() <= 1e-13 * scale.powi(d as i32) {
            return Err(Error::SingularMatrix);
        }
        self.cholesky().map(|_| ())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `Σ = σσᵀ`
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sigma * self.sigma.transpose()
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.covariance()).ok_or(Error::SingularMatrix)
    }

    pub fn excess_return(&self) -> DVector<f64> {
        self.mu.add_scalar(-self.r)
    }

    /// `(μ-r)ᵀ Σ⁻¹ (μ-r)` by a Cholesky solve.
    pub fn sharpe_sq(&self) -> Result<f64> {
        let ex = self.excess_return();
        Ok(ex.dot(&self.cholesky()?.solve(&ex)))
    }

    /// `|Σ| = det(σ)²`
    pub fn det_cov(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        Ok(chol.l_dirty().diagonal().iter().map(|x| x * x).product())
    }

    /// Multi-asset Merton vector `Σ⁻¹(μ-r) / (1-p)`.
    pub fn merton_vector(&self, p: f64) -> Result<DVector<f64>> {
        check_p(p)?;
        Ok(self.cholesky()?.solve(&self.excess_return()) / (1.0 - p))
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p < 1.0 && p != 0.0) {
        return Err(Error::invalid("p", format!("need p < 1, p != 0, got {p}")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    Ok(())
}

fn drift_coeff(params: &MultiMarketParams, p: f64) -> Result<f64> {
    Ok(p * (params.r + params.sharpe_sq()? / (2.0 * (1.0 - p))))
}

/// Shannon reduction `y' = a y + b log y + c` with
/// `b = -pγd/2` and `c = -(pγ/2) log(|Σ| (1-p)^d / (2πγ)^d)`.
pub fn multi_coeffs_beta1(params: &MultiMarketParams, p: f64, gamma: f64) -> Result<OdeCoefficients> {
    check_p(p)?;
    check_gamma(gamma)?;
    let d = params.dim() as f64;
    let a = drift_coeff(params, p)?;
    let b = -p * gamma * d / 2.0;
    let log_arg = params.det_cov()?.ln() + d * ((1.0 - p) / (2.0 * PI * gamma)).ln();
    Ok(OdeCoefficients::shannon(a, b, -p * gamma / 2.0 * log_arg))
}

/// `K` in the Tsallis-3 reduction `y' = a y - pK y^{d/(d+1)} + pγ/2`:
///
/// `K = (d+1)(1-p) / (2π(d+3)) · (3γ|Σ| / (1-p))^{1/(d+1)} · [2Γ((d+3)/2)]^{2/(d+1)}`.
pub fn multi_k(params: &MultiMarketParams, p: f64, gamma: f64) -> Result<f64> {
    check_p(p)?;
    check_gamma(gamma)?;
    let d = params.dim() as f64;
    let e = 1.0 / (d + 1.0);
    Ok((d + 1.0) * (1.0 - p) / (2.0 * PI * (d + 3.0))
        * (3.0 * gamma * params.det_cov()? / (1.0 - p)).powf(e)
        * (2.0 * gamma_fn((d + 3.0) / 2.0)).powf(2.0 * e))
}

pub fn multi_coeffs_beta3(params: &MultiMarketParams, p: f64, gamma: f64) -> Result<OdeCoefficients> {
    let d = params.dim() as f64;
    Ok(OdeCoefficients {
        a: drift_coeff(params, p)?,
        b: -p * multi_k(params, p, gamma)?,
        c: gamma * p / 2.0,
        form: FieldForm::Power { exponent: d / (d + 1.0) },
    })
}

/// Tsallis-3 multi-asset field at `y > 0`.
pub fn multi_ode_beta3_field(params: &MultiMarketParams, p: f64, gamma: f64, y: f64) -> Result<f64> {
    crate::ode::field_h(&multi_coeffs_beta3(params, p, gamma)?, y)
}

/// `R(t) = π^{-1/2} [2Γ((d+3)/2)]^{1/(d+1)} [3γ|Σ| / ((1-p) f)]^{1/(2(d+1))}`.
pub fn multi_radius(params: &MultiMarketParams, p: f64, gamma: f64, f_t: f64) -> Result<f64> {
    check_p(p)?;
    check_gamma(gamma)?;
    if !(f_t > 0.0) {
        return Err(Error::invalid("f_t", format!("must be positive, got {f_t}")));
    }
    let d = params.dim() as f64;
    let e = 1.0 / (d + 1.0);
    Ok(PI.powf(-0.5)
        * (2.0 * gamma_fn((d + 3.0) / 2.0)).powf(e)
        * (3.0 * gamma * params.det_cov()? / ((1.0 - p) * f_t)).powf(0.5 * e))
}

#[derive(Debug, Clone)]
pub struct MultiGaussianPolicy {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl MultiGaussianPolicy {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone()).ok_or(Error::SingularMatrix)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn density(&self, u: &DVector<f64>) -> f64 {
        let x = u - &self.mean;
        let q = x.dot(&self.chol.solve(&x));
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        (-0.5 * (q + log_det + self.dim() as f64 * (2.0 * PI).ln())).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.l() * z
    }
}

#[derive(Debug, Clone)]
pub struct MultiSemicirclePolicy {
    pub center: DVector<f64>,
    pub radius: f64,
    /// Shape matrix `Σ`.
    pub shape: DMatrix<f64>,
    /// Normalizing constant in front of `√(R² - (u-θ)ᵀΣ(u-θ))`.
    pub scale: f64,
    chol: Cholesky<f64, Dyn>,
}

impl MultiSemicirclePolicy {
    pub fn new(center: DVector<f64>, radius: f64, shape: DMatrix<f64>) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        let chol = Cholesky::new(shape.clone()).ok_or(Error::SingularMatrix)?;
        let d = center.len() as f64;
        let sqrt_det: f64 = chol.l_dirty().diagonal().iter().product();
        // ∫_{|y|<R} √(R²-|y|²) dy = R^{d+1} π^{d/2} Γ(3/2) / Γ((d+3)/2)
        let ball = radius.powf(d + 1.0) * PI.powf(d / 2.0) * gamma_fn(1.5) / gamma_fn((d + 3.0) / 2.0);
        Ok(Self {
            center,
            radius,
            shape,
            scale: sqrt_det / ball,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn density(&self, u: &DVector<f64>) -> f64 {
        let x = u - &self.center;
        let q = x.dot(&(&self.shape * &x));
        self.scale * (self.radius * self.radius - q).max(0.0).sqrt()
    }

    /// Radial draw: `|y|² / R² ~ Beta(d/2, 3/2)` along a uniform direction,
    /// then `u = θ + L^{-T} y` with `Σ = L Lᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let mut dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        while dir.norm() == 0.0 {
            dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        }
        dir /= dir.norm();
        let radial = BetaDist::new(d as f64 / 2.0, 1.5).expect("valid shape");
        let rho = radial.sample(rng).sqrt();
        let y = dir * (self.radius * rho);
        let x = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&y)
            .expect("Cholesky factor is nonsingular");
        &self.center + x
    }
}

/// Gaussian optimal policy `N(Σ⁻¹(μ-r)/(1-p), γ/((1-p) f) Σ⁻¹)`.
pub fn multi_policy_beta1(f_t: f64, params: &MultiMarketParams, p: f64, gamma: f64) -> Result<MultiGaussianPolicy> {
    check_gamma(gamma)?;
    if !(f_t > 0.0) {
        return Err(Error::invalid("f_t", format!("must be positive, got {f_t}")));
    }
    let chol = params.cholesky()?;
    let cov = chol.inverse() * (gamma / ((1.0 - p) * f_t));
    // symmetrize away rounding
    let cov = (&cov + cov.transpose()) * 0.5;
    MultiGaussianPolicy::new(params.merton_vector(p)?, cov)
}

/// Semicircle optimal policy with radius [`multi_radius`] and shape `Σ`.
pub fn multi_policy_beta3(f_t: f64, params: &MultiMarketParams, p: f64, gamma: f64) -> Result<MultiSemicirclePolicy> {
    MultiSemicirclePolicy::new(
        params.merton_vector(p)?,
        multi_radius(params, p, gamma, f_t)?,
        params.covariance(),
    )
}

/// Reduced ODE for `d` assets under the spec's entropy index.
pub fn solve_multi_ode(params: &MultiMarketParams, spec: &ExplorationSpec, horizon: f64, step: f64) -> Result<OdeSolution> {
    spec.validate()?;
    let coeffs = match spec.beta {
        Beta::Shannon => multi_coeffs_beta1(params, spec.p, spec.gamma)?,
        Beta::Tsallis3 => multi_coeffs_beta3(params, spec.p, spec.gamma)?,
    };
    solve_reduced_ode(&coeffs, horizon, step)
}

/// One draw from a semicircle policy with a dedicated seed.
pub fn multi_semicircle_sample(policy: &MultiSemicirclePolicy, seed: u64) -> DVector<f64> {
    policy.sample(&mut rng::stream(seed, 0))
}
