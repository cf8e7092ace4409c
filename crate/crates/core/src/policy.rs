//! Exploration specification and the two closed-form policy families.
//!
//! * Shannon entropy (β = 1) yields Gaussian policies.
//! * Tsallis entropy with index 3 yields the Wigner semicircle law
//!   `F √(R² - (u - θ)²)` on `[θ - R, θ + R]`, with `F = 2 / (π R²)`.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::CsvTable;

/// Entropy index. Only the two indices with closed-form policies exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    Shannon,
    Tsallis3,
}

impl Beta {
    pub fn index(self) -> f64 {
        match self {
            Beta::Shannon => 1.0,
            Beta::Tsallis3 => 3.0,
        }
    }
}

impl TryFrom<u8> for Beta {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Beta::Shannon),
            3 => Ok(Beta::Tsallis3),
            other => Err(format!("entropy index must be 1 or 3, got {other}")),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        match b {
            Beta::Shannon => 1,
            Beta::Tsallis3 => 3,
        }
    }
}

/// Utility index `p`, temperature coefficient `γ` and entropy index.
///
/// The exploration weight is `λ(t, w) = γ w^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSpec {
    pub p: f64,
    pub gamma: f64,
    pub beta: Beta,
}

impl ExplorationSpec {
    pub fn new(p: f64, gamma: f64, beta: Beta) -> Result<Self> {
        let spec = Self { p, gamma, beta };
        spec.validate()?;
        Ok(spec)
    }

    /// `p = 1/3`, `γ = 0.3`, Shannon entropy.
    pub fn reference() -> Self {
        Self {
            p: 1.0 / 3.0,
            gamma: 0.3,
            beta: Beta::Shannon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p < 1.0) {
            return Err(Error::invalid("p", format!("must satisfy p < 1, got {}", self.p)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn temperature(&self, w: f64) -> f64 {
        self.gamma * w.powf(self.p)
    }
}

/// Pointwise Tsallis integrand `H_β(z)`, any real `β ≥ 1`.
pub fn tsallis_h(z: f64, beta: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if beta == 1.0 {
        -z * z.ln()
    } else {
        (z - z.powf(beta)) / (beta - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPolicy {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid("variance", format!("must be positive, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn density(&self, u: f64) -> f64 {
        let d = u - self.mean;
        (-0.5 * d * d / self.variance).exp() / (2.0 * PI * self.variance).sqrt()
    }

    pub fn log_density(&self, u: f64) -> f64 {
        let d = u - self.mean;
        -0.5 * (2.0 * PI * self.variance).ln() - 0.5 * d * d / self.variance
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std_dev() * z
    }

    pub fn sample_seeded(&self, seed: u64) -> f64 {
        self.sample(&mut crate::rng::stream(seed, 0))
    }

    /// Raw moments `(E u, E u²)`.
    pub fn moments(&self) -> (f64, f64) {
        (self.mean, self.variance + self.mean * self.mean)
    }

    /// Differential Shannon entropy `½ log(2πe v)`.
    pub fn shannon_entropy(&self) -> f64 {
        0.5 * (2.0 * PI * E * self.variance).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemicirclePolicy {
    pub center: f64,
    pub radius: f64,
}

impl SemicirclePolicy {
    pub fn new(center: f64, radius: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Density height factor `F = 2 / (π R²)`.
    pub fn scale(&self) -> f64 {
        2.0 / (PI * self.radius * self.radius)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn density(&self, u: f64) -> f64 {
        let d = u - self.center;
        let inside = self.radius * self.radius - d * d;
        if inside <= 0.0 {
            0.0
        } else {
            self.scale() * inside.sqrt()
        }
    }

    pub fn cdf(&self, u: f64) -> f64 {
        let x = (u - self.center) / self.radius;
        if x <= -1.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / PI
        }
    }

    /// `u = 2R·Z - R + θ` with `Z ~ Beta(3/2, 3/2)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let beta = rand_distr::Beta::new(1.5, 1.5).expect("valid shape parameters");
        let z: f64 = beta.sample(rng);
        (2.0 * self.radius * z - self.radius + self.center).clamp(self.center - self.radius, self.center + self.radius)
    }

    pub fn sample_seeded(&self, seed: u64) -> f64 {
        self.sample(&mut crate::rng::stream(seed, 0))
    }

    /// `(θ, F R⁴ π / 8 + θ²)`; the variance is `R² / 4`.
    pub fn moments(&self) -> (f64, f64) {
        let r4 = self.radius.powi(4);
        (self.center, self.scale() * r4 * PI / 8.0 + self.center * self.center)
    }

    pub fn variance(&self) -> f64 {
        0.25 * self.radius * self.radius
    }

    /// `∫ π³ du = 3 F³ R⁴ π / 8`.
    pub fn cube_integral(&self) -> f64 {
        3.0 * self.scale().powi(3) * self.radius.powi(4) * PI / 8.0
    }

    /// Tsallis entropy with index 3: `½ (1 - ∫ π³)`.
    pub fn tsallis3_entropy(&self) -> f64 {
        0.5 * (1.0 - self.cube_integral())
    }
}

/// A policy of either closed-form family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Policy {
    Gaussian(GaussianPolicy),
    Semicircle(SemicirclePolicy),
}

impl Policy {
    pub fn density(&self, u: f64) -> f64 {
        match self {
            Policy::Gaussian(g) => g.density(u),
            Policy::Semicircle(s) => s.density(u),
        }
    }

    pub fn moments(&self) -> (f64, f64) {
        match self {
            Policy::Gaussian(g) => g.moments(),
            Policy::Semicircle(s) => s.moments(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn variance(&self) -> f64 {
        match self {
            Policy::Gaussian(g) => g.variance,
            Policy::Semicircle(s) => s.variance(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Policy::Gaussian(g) => g.sample(rng),
            Policy::Semicircle(s) => s.sample(rng),
        }
    }

    /// Entropy of the policy under index `beta`; only the natural pairings
    /// (Gaussian, Shannon) and (semicircle, Tsallis-3) have closed forms.
    pub fn entropy(&self, beta: Beta) -> Result<f64> {
        match (self, beta) {
            (Policy::Gaussian(g), Beta::Shannon) => Ok(g.shannon_entropy()),
            (Policy::Semicircle(s), Beta::Tsallis3) => Ok(s.tsallis3_entropy()),
            (p, b) => Err(Error::Unsupported(format!(
                "no closed-form entropy for {} policy with index {}",
                match p {
                    Policy::Gaussian(_) => "Gaussian",
                    Policy::Semicircle(_) => "semicircle",
                },
                b.index()
            ))),
        }
    }

    /// Plotting range: the support for the semicircle, ±6 sd for Gaussians.
    pub fn plot_range(&self) -> (f64, f64) {
        match self {
            Policy::Gaussian(g) => (g.mean - 6.0 * g.std_dev(), g.mean + 6.0 * g.std_dev()),
            Policy::Semicircle(s) => s.support(),
        }
    }

    /// Density sampled on `n + 1` equally spaced points as `(u, density)`.
    pub fn density_table(&self, n: usize) -> CsvTable {
        let (lo, hi) = self.plot_range();
        let mut table = CsvTable::new(&["u", "density"]);
        let n = n.max(1);
        for i in 0..=n {
            let u = lo + (hi - lo) * i as f64 / n as f64;
            table.push(&[u, self.density(u)]);
        }
        table
    }
}

impl From<GaussianPolicy> for Policy {
    fn from(p: GaussianPolicy) -> Self {
        Policy::Gaussian(p)
    }
}

impl From<SemicirclePolicy> for Policy {
    fn from(p: SemicirclePolicy) -> Self {
        Policy::Semicircle(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_real_line};

    #[test]
    fn beta_serde_is_numeric() {
        let spec: ExplorationSpec = serde_json::from_str(r#"{"p":0.5,"gamma":0.1,"beta":3}"#).unwrap();
        assert_eq!(spec.beta, Beta::Tsallis3);
        assert!(serde_json::from_str::<ExplorationSpec>(r#"{"p":0.5,"gamma":0.1,"beta":2}"#).is_err());
        assert_eq!(serde_json::to_string(&Beta::Shannon).unwrap(), "1");
    }

    #[test]
    fn spec_validation() {
        assert!(ExplorationSpec::new(1.0, 0.3, Beta::Shannon).is_err());
        assert!(ExplorationSpec::new(0.5, 0.0, Beta::Shannon).is_err());
        assert!(ExplorationSpec::new(-3.0, 0.3, Beta::Tsallis3).is_ok());
    }

    #[test]
    fn gaussian_normalizes_and_unit_entropy() {
        let g = GaussianPolicy::new(1.2, 1.8).unwrap();
        let r = integrate_real_line(|u| g.density(u), 1e-10);
        assert!((r.value - 1.0).abs() < 1e-10);
        let unit = GaussianPolicy::new(0.0, 1.0 / (2.0 * PI * E)).unwrap();
        assert!(unit.shannon_entropy().abs() < 1e-15);
        assert_eq!(g.moments(), (1.2, 1.8 + 1.44));
    }

    #[test]
    fn semicircle_peak_and_support() {
        let s = SemicirclePolicy::new(1.2, 0.7).unwrap();
        assert!((s.density(1.2) - 2.0 / (PI * 0.7)).abs() < 1e-14);
        assert_eq!(s.density(1.2 + 0.7 + 1e-9), 0.0);
        assert_eq!(s.density(1.2 - 0.7 - 1e-9), 0.0);
        let (m1, m2) = s.moments();
        assert!((m2 - m1 * m1 - 0.49 / 4.0).abs() < 1e-14);
        assert!((s.cdf(1.2) - 0.5).abs() < 1e-15);
        let r = integrate(|u| s.density(u), 0.5, 1.9, 1e-10);
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn entropy_pairings() {
        let g: Policy = GaussianPolicy::new(0.0, 1.0).unwrap().into();
        let s: Policy = SemicirclePolicy::new(0.0, 1.0).unwrap().into();
        assert!(g.entropy(Beta::Shannon).is_ok());
        assert!(s.entropy(Beta::Tsallis3).is_ok());
        assert!(matches!(g.entropy(Beta::Tsallis3), Err(Error::Unsupported(_))));
        assert!(matches!(s.entropy(Beta::Shannon), Err(Error::Unsupported(_))));
    }

    #[test]
    fn constructors_reject_degenerate() {
        assert!(GaussianPolicy::new(0.0, 0.0).is_err());
        assert!(SemicirclePolicy::new(0.0, -1.0).is_err());
        assert!(GaussianPolicy::new(f64::NAN, 1.0).is_err());
    }
}
