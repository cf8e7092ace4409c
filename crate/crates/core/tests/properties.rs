use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tsallis_merton::market::MarketParams;
use tsallis_merton::multiasset::{multi_policy_beta1, multi_policy_beta3, solve_multi_ode, MultiMarketParams};
use tsallis_merton::ode::{
    equilibria, predicted_trend, reduced_coeffs, solve_reduced_ode, OdeCoefficients, Trend,
};
use tsallis_merton::policy::{tsallis_h, Beta, ExplorationSpec, GaussianPolicy, Policy, SemicirclePolicy};
use tsallis_merton::quadrature::{integrate, integrate_real_line};
use tsallis_merton::rl::{
    f_theta, generate_episodes, martingale_loss_gradient, policy_gradient, EpisodeBatch, PolicyParams,
    TrainingConfig,
};
use tsallis_merton::rng;
use tsallis_merton::solutions::{exploratory_value, merton_strategy, optimal_policy, ValueFunction};
use tsallis_merton::utility;

fn market() -> impl Strategy<Value = MarketParams> {
    (-0.05..0.05f64, -0.5..0.5f64, 0.1..1.0f64).prop_map(|(r, mu, sigma)| MarketParams { r, mu, sigma })
}

fn p_value() -> impl Strategy<Value = f64> {
    prop_oneof![-2.0..-0.01f64, 0.01..0.95f64]
}

fn beta() -> impl Strategy<Value = Beta> {
    prop_oneof![Just(Beta::Shannon), Just(Beta::Tsallis3)]
}

fn gaussian_mass(g: &GaussianPolicy) -> f64 {
    let sd = g.std_dev();
    integrate(|u| g.density(u), g.mean - 40.0 * sd, g.mean + 40.0 * sd, 1e-13).value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_densities_normalize(mean in -5.0..5.0f64, var in 1e-3..1e3f64, radius in 0.1..10.0f64) {
        let g = GaussianPolicy::new(mean, var).unwrap();
        prop_assert!((gaussian_mass(&g) - 1.0).abs() < 1e-8);
        let s = SemicirclePolicy::new(mean, radius).unwrap();
        let mass = integrate(|u| s.density(u), mean - radius, mean + radius, 1e-13).value;
        prop_assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn entropy_closed_forms_match_quadrature(mean in -5.0..5.0f64, var in 1e-3..1e3f64, radius in 0.1..10.0f64) {
        let g = GaussianPolicy::new(mean, var).unwrap();
        let sd = g.std_dev();
        let shannon = integrate(
            |u| {
                let d = g.density(u);
                if d > 0.0 { -d * d.ln() } else { 0.0 }
            },
            mean - 40.0 * sd,
            mean + 40.0 * sd,
            1e-13,
        )
        .value;
        prop_assert!((shannon - g.shannon_entropy()).abs() < 1e-8, "{} vs {}", shannon, g.shannon_entropy());

        let s = SemicirclePolicy::new(mean, radius).unwrap();
        let tsallis = integrate(|u| tsallis_h(s.density(u), 3.0), mean - radius, mean + radius, 1e-13).value;
        prop_assert!((tsallis - s.tsallis3_entropy()).abs() < 1e-8);
    }

    #[test]
    fn tsallis_index_near_one_recovers_shannon(var in 1e-2..1e2f64) {
        let g = GaussianPolicy::new(0.3, var).unwrap();
        let beta = 1.0 + 1e-4;
        let near = integrate_real_line(|u| tsallis_h(g.density(u), beta), 1e-12).value;
        prop_assert!((near - g.shannon_entropy()).abs() < 1e-3);
    }

    #[test]
    fn semicircle_support_is_exact(center in -5.0..5.0f64, radius in 0.1..10.0f64, seed in any::<u64>()) {
        let s = SemicirclePolicy::new(center, radius).unwrap();
        let mut rng = rng::stream(seed, 0);
        for _ in 0..1000 {
            let u = s.sample(&mut rng);
            prop_assert!(u >= center - radius && u <= center + radius);
        }
        prop_assert_eq!(s.density(center + radius * 1.0001), 0.0);
        prop_assert_eq!(s.density(center - radius * 1.0001), 0.0);
        prop_assert!(s.density(center + radius * 0.999) > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rk4_error_scales_with_fourth_power(a in 0.2..1.5f64, b in -1.0..1.0f64, c in -0.5..0.5f64) {
        let coeffs = OdeCoefficients::shannon(a, b, c);
        let reference = solve_reduced_ode(&coeffs, 1.0, 1e-5).unwrap();
        prop_assume!(reference.delta.is_none() && reference.divergence.is_none());
        prop_assume!(reference.y.iter().all(|&y| y > 0.2));
        let end = *reference.y.last().unwrap();
        let err = |h: f64| (solve_reduced_ode(&coeffs, 1.0, h).unwrap().y.last().unwrap() - end).abs();
        let (coarse, fine) = (err(0.02), err(0.01));
        prop_assume!(fine > 1e-12);
        let ratio = coarse / fine;
        prop_assert!((12.0..20.0).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn solution_satisfies_the_ode(m in market(), p in p_value(), gamma in 0.01..1.0f64, b in beta()) {
        let coeffs = reduced_coeffs(&m, &ExplorationSpec { p, gamma, beta: b }).unwrap();
        let step = 1e-4;
        let sol = solve_reduced_ode(&coeffs, 1.0, step).unwrap();
        let n = sol.y.len();
        for i in 2..n.saturating_sub(2) {
            // skip the layer just before blow-down, where derivatives are unbounded
            if sol.y[i - 2].min(sol.y[i + 2]) < 1e-2 || sol.times[i + 2] - sol.times[i + 1] < 0.5 * step {
                continue;
            }
            // fourth-order centered stencil
            let dy = (8.0 * (sol.y[i + 1] - sol.y[i - 1]) - (sol.y[i + 2] - sol.y[i - 2])) / (12.0 * step);
            let scale = coeffs.eval(sol.y[i]).abs().max(1.0);
            prop_assert!((dy - coeffs.eval(sol.y[i])).abs() < 1e-6 * scale, "t={} dy={} h={}", sol.times[i], dy, coeffs.eval(sol.y[i]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trend_matches_solution_monotonicity(m in market(), p in p_value(), gamma in 0.01..1.0f64, b in beta()) {
        let coeffs = reduced_coeffs(&m, &ExplorationSpec { p, gamma, beta: b }).unwrap();
        let sol = solve_reduced_ode(&coeffs, 1.0, 1e-3).unwrap();
        match predicted_trend(&coeffs) {
            Trend::Constant => prop_assert!(sol.y.iter().all(|&y| (y - 1.0).abs() < 1e-12)),
            Trend::IncreasingUnbounded | Trend::IncreasingTo(_) => prop_assert!(sol.is_monotone_nondecreasing()),
            Trend::DecreasingTo(_) | Trend::DecreasingToZero => prop_assert!(sol.is_monotone_nonincreasing()),
        }
        // equilibria act as barriers for the trajectory started at 1
        for y_star in equilibria(&coeffs) {
            let side = (1.0 - y_star).signum();
            prop_assert!(sol.y.iter().all(|&y| (y - y_star).signum() == side));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_mean_is_the_merton_fraction(
        m in market(), p in p_value(), gamma in 0.01..1.0f64, b in beta(), frac in 0.0..=1.0f64,
    ) {
        let vf = ValueFunction::new(&m, &ExplorationSpec { p, gamma, beta: b }, 1.0).unwrap();
        let lo = vf.tau().unwrap_or(0.0);
        let t = if vf.tau().is_some() { lo + (1.0 - lo) * frac.max(1e-6) } else { frac };
        let policy = optimal_policy(&vf, t).unwrap();
        prop_assert_eq!(policy.mean(), merton_strategy(&m, p).unwrap());
        let w = 0.5 + frac;
        prop_assert_eq!(exploratory_value(&vf, 1.0, w).unwrap(), utility(w, p));
    }

    #[test]
    fn rotating_volatility_leaves_policies_unchanged(angle in 0.0..std::f64::consts::TAU, b in beta()) {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.4]);
        let q = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
        let mu = DVector::from_vec(vec![0.08, 0.11]);
        let base = MultiMarketParams::new(0.01, mu.clone(), sigma.clone()).unwrap();
        // σσᵀ is unchanged by σ -> σQ
        let rotated = MultiMarketParams::new(0.01, mu, &sigma * q).unwrap();
        let (p, gamma, f) = (1.0 / 3.0, 0.3, 1.2);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1.0);
        match b {
            Beta::Shannon => {
                let (a, r) = (multi_policy_beta1(f, &base, p, gamma).unwrap(), multi_policy_beta1(f, &rotated, p, gamma).unwrap());
                prop_assert!(a.mean.iter().zip(r.mean.iter()).all(|(x, y)| close(*x, *y)));
                prop_assert!(a.cov.iter().zip(r.cov.iter()).all(|(x, y)| close(*x, *y)));
            }
            Beta::Tsallis3 => {
                let (a, r) = (multi_policy_beta3(f, &base, p, gamma).unwrap(), multi_policy_beta3(f, &rotated, p, gamma).unwrap());
                prop_assert!(a.center.iter().zip(r.center.iter()).all(|(x, y)| close(*x, *y)));
                prop_assert!(close(a.radius, r.radius));
            }
        }
    }

    #[test]
    fn multi_asset_solution_stays_positive(
        s11 in 0.1..0.6f64, s21 in -0.3..0.3f64, s22 in 0.1..0.6f64,
        mu1 in -0.3..0.3f64, mu2 in -0.3..0.3f64,
        p in 0.01..0.95f64, gamma in 0.01..1.0f64, b in beta(),
    ) {
        let params = MultiMarketParams::new(
            0.02,
            DVector::from_vec(vec![mu1, mu2]),
            DMatrix::from_row_slice(2, 2, &[s11, 0.0, s21, s22]),
        )
        .unwrap();
        let sol = solve_multi_ode(&params, &ExplorationSpec { p, gamma, beta: b }, 1.0, 1e-3).unwrap();
        prop_assert!(sol.delta.is_none());
        prop_assert!(sol.y.iter().all(|&y| y > 0.0));
    }

    #[test]
    fn critic_is_one_at_the_horizon(theta in proptest::collection::vec(-5.0..5.0f64, 0..6), horizon in 0.1..5.0f64) {
        prop_assert_eq!(f_theta(&theta, horizon, horizon), 1.0);
    }
}

fn reversed(batch: &EpisodeBatch) -> EpisodeBatch {
    let mut episodes = batch.episodes.clone();
    episodes.reverse();
    EpisodeBatch {
        episodes,
        rejected: batch.rejected,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradients_ignore_episode_order(seed in any::<u64>(), phi1 in -1.0..2.0f64, phi2 in 0.0..2.0f64) {
        let cfg = TrainingConfig::default();
        let phi = PolicyParams::new(phi1, phi2);
        let theta = [0.1, -0.05];
        let batch = generate_episodes(&cfg, &phi, &theta, 16, seed).unwrap();
        let back = reversed(&batch);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300);
        let (g1, g2) = (
            martingale_loss_gradient(&batch, &theta, &cfg.spec, 1.0),
            martingale_loss_gradient(&back, &theta, &cfg.spec, 1.0),
        );
        prop_assert!(g1.iter().zip(&g2).all(|(a, b)| close(*a, *b)));
        let (p1, p2) = (
            policy_gradient(&batch, &theta, &phi, &cfg.spec, 1.0),
            policy_gradient(&back, &theta, &phi, &cfg.spec, 1.0),
        );
        prop_assert!(p1.iter().zip(&p2).all(|(a, b)| close(*a, *b)));
    }
}

#[test]
fn semicircle_policy_is_exposed_through_the_enum() {
    let vf = ValueFunction::new(
        &MarketParams::reference(),
        &ExplorationSpec {
            beta: Beta::Tsallis3,
            ..ExplorationSpec::reference()
        },
        1.0,
    )
    .unwrap();
    assert!(matches!(optimal_policy(&vf, 0.5).unwrap(), Policy::Semicircle(_)));
}
