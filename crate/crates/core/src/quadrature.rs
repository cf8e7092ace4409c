//! Numerical integration.
//!
//! Globally adaptive Gauss–Kronrod (7/15) for density integrals, plus the
//! uniform-grid trapezoid and Simpson rules used on solved ODE grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> QuadResult {
    if a == b {
        return QuadResult {
            value: 0.0,
            abs_error: 0.0,
            converged: true,
        };
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod15(&f, a, b);
    let mut error = first.error;
    heap.push(first);
    while error > abs_tol && heap.len() < MAX_INTERVALS {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    let value = heap.iter().map(|s| s.value).sum();
    let abs_error: f64 = heap.iter().map(|s| s.error).sum();
    QuadResult {
        value,
        abs_error,
        converged: abs_error <= abs_tol,
    }
}

/// Integrates over the whole real line via `u = x / (1 - x²)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> QuadResult {
    integrate(
        |x| {
            let d = 1.0 - x * x;
            let u = x / d;
            let jac = (1.0 + x * x) / (d * d);
            let v = f(u) * jac;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        abs_tol,
    )
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Composite Simpson rule on uniformly spaced samples.
///
/// An even number of intervals uses the classical 1-4-2-4-1 weights; an odd
/// number closes the last three intervals with Simpson's 3/8 rule.
pub fn simpson(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => trapezoid(values, step),
        _ => {
            let intervals = n - 1;
            if intervals % 2 == 0 {
                simpson_even(values, step)
            } else if intervals == 3 {
                simpson_38(values, step)
            } else {
                simpson_even(&values[..n - 3], step) + simpson_38(&values[n - 4..], step)
            }
        }
    }
}

fn simpson_even(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * step / 3.0
}

fn simpson_38(values: &[f64], step: f64) -> f64 {
    3.0 * step / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3])
}
