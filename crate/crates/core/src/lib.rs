//! Exploratory Merton portfolio problem under Tsallis entropy regularization.
//!
//! The crate covers the whole pipeline for CRRA investors whose exploration
//! weight is the wealth-proportional temperature `λ(t, w) = γ w^p`:
//!
//! * [`market`]: price, classical wealth and exploratory wealth simulation;
//! * [`policy`]: the Gaussian (Shannon, β = 1) and Wigner semicircle
//!   (Tsallis, β = 3) policy families;
//! * [`ode`]: the reduced ODE `y' = h(y)`, its field classification,
//!   blow-down detection and the well-posedness verdict;
//! * [`solutions`]: Merton baseline, exploratory value functions, optimal
//!   policies, exploration cost and vanishing-exploration diagnostics;
//! * [`multiasset`]: closed forms for `d` risky assets;
//! * [`rl`]: the off-line actor-critic learner (martingale loss + policy
//!   gradient);
//! * [`cli`]: the experiment harness behind the `tsallis-merton` binary.

pub mod cli;
pub mod error;
pub mod market;
pub mod multiasset;
pub mod ode;
pub mod output;
pub mod policy;
pub mod quadrature;
pub mod rl;
pub mod rng;
pub mod solutions;

pub use error::{Error, Result};
pub use market::{MarketParams, TimeGrid};
pub use ode::{OdeCoefficients, OdeSolution, WellPosednessReport, WellPosednessVerdict};
pub use policy::{Beta, ExplorationSpec, GaussianPolicy, Policy, SemicirclePolicy};
pub use solutions::ValueFunction;

/// CRRA utility `w^p / p` (`p ≠ 0`) or `log w` (`p = 0`).
///
/// Non-positive wealth maps to `-∞` for `p ≤ 0` and to `0` for `0 < p < 1`.
pub fn utility(w: f64, p: f64) -> f64 {
    if w <= 0.0 {
        return if p > 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 0.0 {
        w.ln()
    } else {
        w.powf(p) / p
    }
}
