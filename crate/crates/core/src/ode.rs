//! Reduced ODE for the exploratory value function.
//!
//! With the ansatz `v(t, w) = f(t) w^p / p` the exploratory HJB equation
//! collapses to a scalar ODE for `f`. In reversed time `y(s) = f(T - s)` it
//! reads `y' = h(y), y(0) = 1` with
//!
//! * `h(y) = a y + b log y + c` under Shannon entropy,
//! * `h(y) = a y + b y^k + c` under Tsallis-3 entropy (`k = 1/2`; the
//!   multi-asset field uses `k = d / (d + 1)`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::policy::{Beta, ExplorationSpec};
use crate::quadrature;

/// Solutions are truncated once they would drop below this level.
pub const BLOW_DOWN_FLOOR: f64 = 1e-12;
/// Solutions above this level are reported as diverging.
pub const OVERFLOW_CAP: f64 = 1e308;
const EVENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldForm {
    /// `a y + b log y + c`
    Log,
    /// `a y + b y^exponent + c`, `0 < exponent < 1`
    Power { exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub form: FieldForm,
}

impl OdeCoefficients {
    pub fn shannon(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c, form: FieldForm::Log }
    }

    pub fn tsallis3(a: f64, b: f64, c: f64) -> Self {
        Self {
            a,
            b,
            c,
            form: FieldForm::Power { exponent: 0.5 },
        }
    }

    pub fn beta(&self) -> Option<Beta> {
        match self.form {
            FieldForm::Log => Some(Beta::Shannon),
            FieldForm::Power { exponent } if exponent == 0.5 => Some(Beta::Tsallis3),
            FieldForm::Power { .. } => None,
        }
    }

    /// `h(y)`; NaN outside `y > 0`.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return f64::NAN;
        }
        match self.form {
            FieldForm::Log => self.a * y + self.b * y.ln() + self.c,
            FieldForm::Power { exponent } => {
                let pow = if exponent == 0.5 { y.sqrt() } else { y.powf(exponent) };
                self.a * y + self.b * pow + self.c
            }
        }
    }

    /// `h'(y)`.
    pub fn derivative(&self, y: f64) -> f64 {
        match self.form {
            FieldForm::Log => self.a + self.b / y,
            FieldForm::Power { exponent } => self.a + self.b * exponent * y.powf(exponent - 1.0),
        }
    }

    /// Interior critical point of `h`, if any.
    pub fn critical_point(&self) -> Option<f64> {
        if self.a == 0.0 || self.b == 0.0 || self.a.signum() == self.b.signum() {
            return None;
        }
        Some(match self.form {
            FieldForm::Log => -self.b / self.a,
            FieldForm::Power { exponent } => (-self.a / (self.b * exponent)).powf(1.0 / (exponent - 1.0)),
        })
    }
}

/// Reduced ODE coefficients for the single-asset problem.
///
/// `p = 0` has no reduction (the log-utility problem is solved in closed
/// form in [`crate::solutions`]) and is rejected here.
pub fn reduced_coeffs(market: &MarketParams, spec: &ExplorationSpec) -> Result<OdeCoefficients> {
    market.validate()?;
    spec.validate()?;
    let (p, gamma) = (spec.p, spec.gamma);
    if p == 0.0 {
        return Err(Error::Unsupported(
            "p = 0 has no ODE reduction; use the log-utility closed form".into(),
        ));
    }
    let s2 = market.sigma * market.sigma;
    let a = p * (market.r + market.sharpe_sq() / (2.0 * (1.0 - p)));
    Ok(match spec.beta {
        Beta::Shannon => {
            let b = -p * gamma / 2.0;
            let c = b * (s2 * (1.0 - p) / (2.0 * PI * gamma)).ln();
            OdeCoefficients::shannon(a, b, c)
        }
        Beta::Tsallis3 => {
            let b = -p * (3.0 * (1.0 - p) * s2 * gamma).sqrt() / (2.0 * PI);
            let c = gamma * p / 2.0;
            OdeCoefficients::tsallis3(a, b, c)
        }
    })
}

/// Reversed-time solution without exploration (`γ = 0`): `y⁰(s) = e^{a s}`.
pub fn zero_exploration_y(market: &MarketParams, p: f64, s: f64) -> f64 {
    (p * (market.r + market.sharpe_sq() / (2.0 * (1.0 - p))) * s).exp()
}

/// `h(y)`, rejecting `y ≤ 0`.
pub fn field_h(coeffs: &OdeCoefficients, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::invalid("y", format!("field is defined for y > 0 only, got {y}")));
    }
    Ok(coeffs.eval(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldShape {
    StrictlyIncreasing,
    StrictlyDecreasing,
    IncreasingThenDecreasing,
    DecreasingThenIncreasing,
    Constant,
}

/// Monotonicity and zero structure of `h` on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldClass {
    /// `1(i)` … `2(iii)`: first digit is the sign branch of `b` (`b > 0`
    /// first), roman numeral the sub-case. Prefixed with the field family.
    pub case_tag: String,
    pub shape: FieldShape,
    pub zero_count: usize,
    /// Value of `h` at its interior extremum, when the shape has one.
    pub discriminant: Option<f64>,
    pub description: String,
}

/// Classifies `h` from its coefficients alone.
pub fn classify_field(coeffs: &OdeCoefficients) -> FieldClass {
    let OdeCoefficients { a, b, c, form } = *coeffs;
    let family = match coeffs.beta() {
        Some(Beta::Shannon) => "shannon",
        Some(Beta::Tsallis3) => "tsallis3",
        None => "power",
    };
    let log_form = matches!(form, FieldForm::Log);
    // value of h at its interior extremum
    let extremum = coeffs.critical_point().map(|y| match form {
        // b[log|b| - log|a| - 1] + c
        FieldForm::Log => b * ((b.abs()).ln() - a.abs().ln() - 1.0) + c,
        FieldForm::Power { .. } => coeffs.eval(y),
    });

    let (branch, sub, shape, zeros, range) = if b > 0.0 {
        if a >= 0.0 {
            // from h(0+) (-∞ for log, c for power) up to +∞
            let zeros = if log_form || c < 0.0 { 1 } else { 0 };
            (1, "i", FieldShape::StrictlyIncreasing, zeros, "increasing to +inf")
        } else {
            let m = extremum.expect("critical point exists when a < 0 < b");
            let start_negative = log_form || c < 0.0;
            let zeros = if !start_negative {
                1
            } else if m > 0.0 {
                2
            } else if m == 0.0 {
                1
            } else {
                0
            };
            let sub = if m > 0.0 { "ii" } else { "iii" };
            (1, sub, FieldShape::IncreasingThenDecreasing, zeros, "rises then falls to -inf")
        }
    } else if b < 0.0 {
        if a <= 0.0 {
            let zeros = if log_form || c > 0.0 { 1 } else { 0 };
            (2, "i", FieldShape::StrictlyDecreasing, zeros, "decreasing to -inf")
        } else {
            let m = extremum.expect("critical point exists when b < 0 < a");
            let start_positive = log_form || c > 0.0;
            let zeros = if !start_positive {
                1
            } else if m < 0.0 {
                2
            } else if m == 0.0 {
                1
            } else {
                0
            };
            let sub = if m < 0.0 { "ii" } else { "iii" };
            (2, sub, FieldShape::DecreasingThenIncreasing, zeros, "falls then rises to +inf")
        }
    } else if a > 0.0 {
        (0, "linear", FieldShape::StrictlyIncreasing, usize::from(c < 0.0), "linear")
    } else if a < 0.0 {
        (0, "linear", FieldShape::StrictlyDecreasing, usize::from(c > 0.0), "linear")
    } else {
        (0, "constant", FieldShape::Constant, 0, "constant")
    };
    let case_tag = if branch == 0 {
        format!("{family}/{sub}")
    } else {
        format!("{family}/{branch}({sub})")
    };
    let zero_word = match zeros {
        0 => "no zeros".to_owned(),
        1 => "one zero".to_owned(),
        n => format!("{n} distinct zeros"),
    };
    FieldClass {
        case_tag,
        shape,
        zero_count: zeros,
        discriminant: match shape {
            FieldShape::IncreasingThenDecreasing | FieldShape::DecreasingThenIncreasing => extremum,
            _ => None,
        },
        description: format!("{shape:?}, {range}, {zero_word}"),
    }
}

/// Zeros of `h` on `(0, ∞)` in increasing order, by bisection in `log y`.
pub fn equilibria(coeffs: &OdeCoefficients) -> Vec<f64> {
    const LO: f64 = -700.0;
    const HI: f64 = 700.0;
    let h = |s: f64| coeffs.eval(s.exp());
    let mut cuts = vec![LO];
    if let Some(y) = coeffs.critical_point() {
        let s = y.ln();
        if s > LO && s < HI {
            cuts.push(s);
        }
    }
    cuts.push(HI);
    let mut zeros = Vec::new();
    for w in cuts.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (hl, hh) = (h(lo), h(hi));
        if hl == 0.0 {
            zeros.push(lo.exp());
            continue;
        }
        if hl.signum() == hh.signum() {
            // a tangent extremum counts as a zero
            if hh == 0.0 {
                zeros.push(hi.exp());
            }
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid).signum() == hl.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        zeros.push((0.5 * (lo + hi)).exp());
    }
    zeros.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs());
    zeros
}

/// Long-run behaviour of the solution started at `y(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trend", content = "limit", rename_all = "snake_case")]
pub enum Trend {
    Constant,
    IncreasingUnbounded,
    IncreasingTo(f64),
    DecreasingTo(f64),
    DecreasingToZero,
}

/// Predicts the trend of the solution from `h(1)` and the equilibria; an
/// autonomous scalar flow is monotone and never crosses an equilibrium.
pub fn predicted_trend(coeffs: &OdeCoefficients) -> Trend {
    let h1 = coeffs.eval(1.0);
    let eq = equilibria(coeffs);
    if h1 == 0.0 {
        Trend::Constant
    } else if h1 > 0.0 {
        eq.iter()
            .copied()
            .find(|&y| y > 1.0)
            .map_or(Trend::IncreasingUnbounded, Trend::IncreasingTo)
    } else {
        eq.iter()
            .rev()
            .copied()
            .find(|&y| y < 1.0)
            .map_or(Trend::DecreasingToZero, Trend::DecreasingTo)
    }
}

/// Reversed-time trajectory `y(s)`, `s ∈ [0, horizon]`, from fixed-step RK4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    pub coeffs: OdeCoefficients,
    pub horizon: f64,
    pub step: f64,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    /// First time `y` reaches zero; `None` when it stays positive on the horizon.
    pub delta: Option<f64>,
    /// Time at which `y` exceeded [`OVERFLOW_CAP`], if it did.
    pub divergence: Option<f64>,
    pub class: FieldClass,
}

impl OdeSolution {
    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("solution holds y(0)")
    }

    /// `y(s)` by cubic Hermite interpolation with slopes `h(y)`; `None`
    /// outside the computed range.
    pub fn value_at(&self, s: f64) -> Option<f64> {
        let last = self.last_time();
        if !(s >= 0.0 && s <= last) {
            return None;
        }
        let n = self.times.len();
        if n == 1 {
            return Some(self.y[0]);
        }
        let mut i = ((s / self.step) as usize).min(n - 2);
        while i > 0 && self.times[i] > s {
            i -= 1;
        }
        while i + 2 < n && self.times[i + 1] < s {
            i += 1;
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let len = t1 - t0;
        if len <= 0.0 {
            return Some(y0);
        }
        let (d0, d1) = (self.coeffs.eval(y0), self.coeffs.eval(y1));
        let x = (s - t0) / len;
        let (x2, x3) = (x * x, x * x * x);
        Some(
            (2.0 * x3 - 3.0 * x2 + 1.0) * y0
                + (x3 - 2.0 * x2 + x) * len * d0
                + (-2.0 * x3 + 3.0 * x2) * y1
                + (x3 - x2) * len * d1,
        )
    }

    pub fn is_monotone_nondecreasing(&self) -> bool {
        self.y.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn is_monotone_nonincreasing(&self) -> bool {
        self.y.windows(2).all(|w| w[1] <= w[0])
    }
}

/// One RK4 step; `None` if a stage leaves `y > 0` or the result drops to the floor.
fn rk4_step(coeffs: &OdeCoefficients, y: f64, h: f64) -> Option<f64> {
    let k1 = coeffs.eval(y);
    let k2 = coeffs.eval(y + 0.5 * h * k1);
    let k3 = coeffs.eval(y + 0.5 * h * k2);
    let k4 = coeffs.eval(y + h * k3);
    let next = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if next.is_nan() || !(next > BLOW_DOWN_FLOOR) {
        None
    } else {
        Some(next)
    }
}

/// Integrates `y' = h(y), y(0) = 1` over `[0, horizon]` with classical RK4.
///
/// The step is shrunk to `horizon / ceil(horizon / step)` so the grid lands
/// on the horizon. A step that would take `y` below [`BLOW_DOWN_FLOOR`] is
/// bisected to locate the blow-down time to `1e-10` and the trajectory is
/// truncated there.
pub fn solve_reduced_ode(coeffs: &OdeCoefficients, horizon: f64, step: f64) -> Result<OdeSolution> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid("step", format!("must be positive, got {step}")));
    }
    let n_steps = (horizon / step).ceil().max(1.0) as usize;
    let h = horizon / n_steps as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut ys = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    ys.push(1.0);
    let mut delta = None;
    let mut divergence = None;
    let mut y = 1.0;
    for i in 0..n_steps {
        let t = i as f64 * h;
        match rk4_step(coeffs, y, h) {
            Some(next) if next.is_finite() && next <= OVERFLOW_CAP => {
                y = next;
                times.push(if i + 1 == n_steps { horizon } else { (i + 1) as f64 * h });
                ys.push(y);
            }
            Some(_) => {
                divergence = Some(t + h);
                break;
            }
            None => {
                let (mut lo, mut hi) = (0.0, h);
                let mut y_lo = y;
                while hi - lo > EVENT_TOL {
                    let mid = 0.5 * (lo + hi);
                    match rk4_step(coeffs, y, mid) {
                        Some(v) => {
                            lo = mid;
                            y_lo = v;
                        }
                        None => hi = mid,
                    }
                }
                if lo > 0.0 {
                    times.push(t + lo);
                    ys.push(y_lo);
                }
                delta = Some(t + hi);
                break;
            }
        }
    }
    Ok(OdeSolution {
        coeffs: *coeffs,
        horizon,
        step: h,
        times,
        y: ys,
        delta,
        divergence,
        class: classify_field(coeffs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum WellPosednessVerdict {
    WellPosedEverywhere,
    /// Finite value on `(tau, T]`.
    WellPosedOnTail { tau: f64 },
    /// Infinite value on `[0, tau]`.
    IllPosedBeforeTau { tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellPosednessReport {
    pub verdicts: Vec<WellPosednessVerdict>,
    pub horizon: f64,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub diagnostic: String,
}

impl WellPosednessReport {
    pub fn is_well_posed_everywhere(&self) -> bool {
        self.tau.is_none()
    }

    /// The boundary `t = tau` counts as ill-posed.
    pub fn is_well_posed_at(&self, t: f64) -> bool {
        self.tau.is_none_or(|tau| t > tau)
    }
}

/// Splits `[0, T]` into finite/infinite value regions from the blow-down time.
pub fn wellposedness_verdict(solution: &OdeSolution, horizon: f64) -> Result<WellPosednessReport> {
    match solution.delta {
        Some(delta) if delta < horizon => {
            let tau = horizon - delta;
            Ok(WellPosednessReport {
                verdicts: vec![
                    WellPosednessVerdict::WellPosedOnTail { tau },
                    WellPosednessVerdict::IllPosedBeforeTau { tau },
                ],
                horizon,
                delta: Some(delta),
                tau: Some(tau),
                diagnostic: format!(
                    "reduced solution reaches zero at delta = {delta:.10}; the value function is finite on ({tau:.10}, {horizon}] and infinite on [0, {tau:.10}] (over-exploration)"
                ),
            })
        }
        _ => {
            if solution.delta.is_none() && solution.divergence.is_none() && solution.last_time() < horizon {
                return Err(Error::invalid(
                    "horizon",
                    format!("solution covers [0, {}] only, need {horizon}", solution.last_time()),
                ));
            }
            let diagnostic = match (solution.delta, solution.divergence) {
                (Some(d), _) => format!("reduced solution reaches zero at delta = {d:.10} >= T"),
                (None, Some(s)) => format!("reduced solution grows without bound (exceeds 1e308 at s = {s})"),
                (None, None) => "reduced solution stays positive on [0, T]".to_owned(),
            };
            Ok(WellPosednessReport {
                verdicts: vec![WellPosednessVerdict::WellPosedEverywhere],
                horizon,
                delta: solution.delta,
                tau: None,
                diagnostic,
            })
        }
    }
}

/// Reward of the wide Gaussian policies `N(0, n²)` under a time-only
/// temperature:
///
/// `J(π^n) = (w^p/p) exp{p r (T-t) + ((p²-p)/2) σ² n² (T-t)} + ½ log(2πe n²) ∫_t^T λ(s) ds`.
pub fn illposedness_witness<L>(
    lambda: L,
    market: &MarketParams,
    p: f64,
    t: f64,
    horizon: f64,
    w: f64,
    n_sequence: &[f64],
) -> Result<Vec<f64>>
where
    L: Fn(f64) -> f64,
{
    market.validate()?;
    if !(p < 1.0 && p != 0.0) {
        return Err(Error::invalid("p", format!("need p < 1, p != 0, got {p}")));
    }
    if !(w > 0.0) || !(horizon > t) {
        return Err(Error::invalid("t/w", "need w > 0 and t < T"));
    }
    let tau = horizon - t;
    let lambda_integral = quadrature::integrate(&lambda, t, horizon, 1e-12).value;
    let s2 = market.sigma * market.sigma;
    Ok(n_sequence
        .iter()
        .map(|&n| {
            let growth = p * market.r * tau + 0.5 * (p * p - p) * s2 * n * n * tau;
            w.powf(p) / p * growth.exp()
                + 0.5 * (2.0 * PI * std::f64::consts::E * n * n).ln() * lambda_integral
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults(beta: Beta) -> OdeCoefficients {
        let spec = ExplorationSpec {
            beta,
            ..ExplorationSpec::reference()
        };
        reduced_coeffs(&MarketParams::reference(), &spec).unwrap()
    }

    #[test]
    fn reference_coefficients() {
        let c = defaults(Beta::Shannon);
        assert!((c.a - 0.04).abs() < 1e-15);
        assert!((c.b + 0.05).abs() < 1e-15);
        let expected_c = 0.05 * (2.0 * PI * 0.3 / (0.25 * 2.0 / 3.0)).ln();
        assert!((c.c - expected_c).abs() < 1e-15);
        assert!((c.c - 0.121_29).abs() < 1e-5);
        let c3 = defaults(Beta::Tsallis3);
        assert!((c3.c - 0.05).abs() < 1e-15);
        assert!((c3.a - 0.04).abs() < 1e-15);
    }

    #[test]
    fn sign_of_b_flips_with_p() {
        let market = MarketParams::reference();
        let pos = reduced_coeffs(&market, &ExplorationSpec::new(0.4, 0.3, Beta::Shannon).unwrap()).unwrap();
        let neg = reduced_coeffs(&market, &ExplorationSpec::new(-0.4, 0.3, Beta::Shannon).unwrap()).unwrap();
        assert!(pos.b < 0.0 && neg.b > 0.0);
        assert_eq!(pos.b, -neg.b);
        let n3 = reduced_coeffs(&market, &ExplorationSpec::new(-0.4, 0.3, Beta::Tsallis3).unwrap()).unwrap();
        assert!(n3.b > 0.0 && n3.c < 0.0);
    }

    #[test]
    fn log_utility_not_reduced() {
        let spec = ExplorationSpec::new(0.0, 0.3, Beta::Shannon).unwrap();
        assert!(matches!(
            reduced_coeffs(&MarketParams::reference(), &spec),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn field_examples() {
        assert_eq!(field_h(&OdeCoefficients::shannon(1.0, 1.0, 0.0), 1.0).unwrap(), 1.0);
        assert_eq!(field_h(&OdeCoefficients::tsallis3(0.0, -1.0, 1.0), 1.0).unwrap(), 0.0);
        assert!(field_h(&OdeCoefficients::shannon(1.0, 1.0, 0.0), 0.0).is_err());
        assert!(field_h(&OdeCoefficients::shannon(1.0, 1.0, 0.0), -2.0).is_err());
    }

    #[test]
    fn case_table() {
        let c = classify_field(&OdeCoefficients::shannon(0.5, 1.0, 0.0));
        assert_eq!(c.case_tag, "shannon/1(i)");
        assert_eq!(c.shape, FieldShape::StrictlyIncreasing);
        // b<0, a>0, b[log(-b) - log a - 1] + c < 0
        let coeffs = OdeCoefficients::shannon(1.0, -1.0, -2.0);
        let c = classify_field(&coeffs);
        assert_eq!(c.case_tag, "shannon/2(ii)");
        assert_eq!(c.shape, FieldShape::DecreasingThenIncreasing);
        assert_eq!(c.zero_count, 2);
        assert_eq!(equilibria(&coeffs).len(), 2);
        let c = classify_field(&OdeCoefficients::shannon(1.0, -1.0, 2.0));
        assert_eq!(c.case_tag, "shannon/2(iii)");
        assert_eq!(c.zero_count, 0);
        let c = classify_field(&OdeCoefficients::shannon(-1.0, 1.0, 2.0));
        assert_eq!(c.case_tag, "shannon/1(ii)");
        let c = classify_field(&OdeCoefficients::shannon(-1.0, 1.0, 0.5));
        assert_eq!(c.case_tag, "shannon/1(iii)");
        assert_eq!(c.zero_count, 0);
        let c = classify_field(&OdeCoefficients::shannon(-1.0, -1.0, 0.5));
        assert_eq!(c.case_tag, "shannon/2(i)");
    }

    #[test]
    fn exact_growth_when_gamma_vanishes() {
        // b = c = 0: y = e^{a s}
        let coeffs = OdeCoefficients::shannon(0.04, 0.0, 0.0);
        let sol = solve_reduced_ode(&coeffs, 1.0, 1e-4).unwrap();
        let err = sol
            .times
            .iter()
            .zip(&sol.y)
            .map(|(s, y)| (y - (0.04 * s).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert_eq!(sol.times.len(), 10_001);
        assert_eq!(sol.last_time(), 1.0);
    }

    #[test]
    fn linear_solution_in_power_field() {
        let coeffs = OdeCoefficients::tsallis3(0.0, 0.0, -0.3);
        let sol = solve_reduced_ode(&coeffs, 2.0, 1e-3).unwrap();
        for (s, y) in sol.times.iter().zip(&sol.y) {
            assert!((y - (1.0 - 0.3 * s)).abs() < 1e-12);
        }
        assert!(sol.delta.is_none());
        let sol = solve_reduced_ode(&coeffs, 5.0, 1e-3).unwrap();
        let delta = sol.delta.unwrap();
        assert!((delta - 1.0 / 0.3).abs() < 1e-9, "{delta}");
    }

    #[test]
    fn blow_down_splits_verdict() {
        // p < 0 Shannon with strongly negative drift
        let market = MarketParams { r: -0.5, mu: -0.5, sigma: 0.3 };
        let spec = ExplorationSpec::new(-1.0, 0.5, Beta::Shannon).unwrap();
        let coeffs = reduced_coeffs(&market, &spec).unwrap();
        assert!(coeffs.eval(1.0) < 0.0);
        let sol = solve_reduced_ode(&coeffs, 5.0, 1e-3).unwrap();
        let delta = sol.delta.expect("hits zero");
        let report = wellposedness_verdict(&sol, 5.0).unwrap();
        assert_eq!(report.tau, Some(5.0 - delta));
        assert!(report
            .verdicts
            .contains(&WellPosednessVerdict::IllPosedBeforeTau { tau: 5.0 - delta }));
        assert!(!report.is_well_posed_at(5.0 - delta));
        assert!(report.is_well_posed_at(5.0 - delta + 1e-6));
        assert!(sol.is_monotone_nonincreasing());
    }

    #[test]
    fn positive_p_is_well_posed() {
        let sol = solve_reduced_ode(&defaults(Beta::Shannon), 1.0, 1e-4).unwrap();
        let report = wellposedness_verdict(&sol, 1.0).unwrap();
        assert_eq!(report.verdicts, vec![WellPosednessVerdict::WellPosedEverywhere]);
        assert!(sol.y.iter().all(|&y| y > 0.0 && y.is_finite()));
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let sol = solve_reduced_ode(&defaults(Beta::Shannon), 1.0, 1e-2).unwrap();
        let fine = solve_reduced_ode(&defaults(Beta::Shannon), 1.0, 1e-4).unwrap();
        for k in 0..97 {
            let s = 0.0103 * k as f64;
            let diff = (sol.value_at(s).unwrap() - fine.value_at(s).unwrap()).abs();
            assert!(diff < 1e-9, "s={s} diff={diff}");
        }
        assert!(sol.value_at(1.0 + 1e-9).is_none());
    }

    #[test]
    fn witness_closed_form_n1() {
        let market = MarketParams::reference();
        let (p, gamma) = (1.0 / 3.0, 0.3);
        let j = illposedness_witness(|_| gamma, &market, p, 0.0, 1.0, 1.0, &[1.0]).unwrap()[0];
        let expected = 3.0 * ((p * p - p) / 2.0 * 0.25).exp() + gamma / 2.0 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((j - expected).abs() < 1e-12);
    }

    #[test]
    fn witness_direction_depends_on_p() {
        let market = MarketParams::reference();
        let ns = [1e3, 1e4, 1e6, 1e9];
        let up = illposedness_witness(|_| 0.3, &market, 1.0 / 3.0, 0.0, 1.0, 1.0, &ns).unwrap();
        assert!(up.windows(2).all(|w| w[1] > w[0]));
        let down = illposedness_witness(|_| 0.3, &market, -0.5, 0.0, 1.0, 1.0, &[1.0, 2.0, 3.0]).unwrap();
        assert!(down.windows(2).all(|w| w[1] < w[0]));
    }
}
