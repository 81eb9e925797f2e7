use mixmarket_core::general::{complement_outcome, op_objective, solve_general};
use mixmarket_core::numeric::{central_difference, integrate};
use mixmarket_core::oracle::{grid_argmax_revenue, simulate_market};
use mixmarket_core::solver::{
    effective_cost, effective_cost_slope, foc_residual, revenue_at_cutoff, solve_cutoff,
    solve_mechanism, MarketParams,
};
use mixmarket_core::welfare::{condition_lhs, consumer_surplus, sensitivities, sweep};
use mixmarket_core::{Family, RegularDistribution};
use proptest::prelude::*;

fn regular_distribution() -> impl Strategy<Value = RegularDistribution> {
    prop_oneof![
        (0.0f64..3.0, 0.2f64..3.0).prop_map(|(lo, w)| (Family::Uniform, lo, lo + w)),
        (0.1f64..2.0, 0.0f64..3.0, 0.0f64..2.0, 0.2f64..2.0).prop_map(|(a, b, lo, w)| (
            Family::LinearDensity {
                intercept: a,
                slope: b
            },
            lo,
            lo + w
        )),
        (1.0f64..4.0, 0.0f64..1.0).prop_map(|(c, lo)| (
            Family::Power { exponent: c },
            lo,
            lo + 1.0
        )),
        (0.1f64..3.0, 0.0f64..1.0, 0.5f64..3.0).prop_map(|(r, lo, w)| (
            Family::TruncatedExponential { rate: r },
            lo,
            lo + w
        )),
        (0.2f64..1.8, 0.1f64..0.8).prop_map(|(m, s)| (
            Family::TruncatedNormal {
                mean: m,
                std_dev: s
            },
            0.0,
            2.0
        )),
    ]
    .prop_filter_map("regular", |(family, lo, hi)| {
        RegularDistribution::new(family, lo, hi)
            .ok()
            .filter(|d| d.is_regular())
    })
}

fn interior(d: &RegularDistribution, t: f64) -> f64 {
    d.v_lo() + d.width() * (0.01 + 0.98 * t)
}

fn grid_point(d: &RegularDistribution, i: usize, n: usize) -> f64 {
    if i == n {
        d.v_hi()
    } else {
        d.v_lo() + d.width() * i as f64 / n as f64
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tail_integral_identity(d in regular_distribution(), t in 0.0f64..1.0) {
        let v = interior(&d, t);
        let tail = integrate(
            |s| d.virtual_value(s).unwrap() * d.pdf(s),
            v,
            d.v_hi(),
            1e-11,
        )
        .unwrap();
        prop_assert!((tail - v * d.sf(v)).abs() <= 1e-9, "{tail} vs {}", v * d.sf(v));
    }

    #[test]
    fn g_is_increasing_with_fixed_endpoints(d in regular_distribution()) {
        let g = |v: f64| d.g_function(v).unwrap();
        prop_assert!((g(d.v_lo()) - d.v_lo()).abs() <= 1e-12);
        prop_assert!((g(d.v_hi()) - d.v_hi()).abs() <= 1e-12);
        let n = 400;
        let values: Vec<f64> = (0..=n)
            .map(|i| g(grid_point(&d, i, n)))
            .collect();
        for w in values.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn g_slope_matches_finite_differences(d in regular_distribution(), t in 0.0f64..1.0) {
        let v = interior(&d, t);
        let h = 1e-6 * d.width();
        let fd = central_difference(|x| d.g_function(x).unwrap(), v, h);
        let analytic = d.g_slope(v).unwrap();
        prop_assert!(rel_close(analytic, fd, 1e-4), "{analytic} vs {fd}");
    }

    #[test]
    fn residual_changes_sign_once(d in regular_distribution(), k in 0.01f64..0.99) {
        let lo = d.standard_monopoly_price().max(d.quantile(k));
        let n = 500;
        let signs: Vec<bool> = (1..n)
            .map(|i| {
                let v = lo + (d.v_hi() - lo) * i as f64 / n as f64;
                foc_residual(&d, k, v).unwrap() > 0.0
            })
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!(changes <= 1);
        let cutoff = solve_cutoff(&d, k).unwrap();
        let expected_changes = usize::from(cutoff > lo + (d.v_hi() - lo) / n as f64
            && cutoff < lo + (d.v_hi() - lo) * (n - 1) as f64 / n as f64);
        prop_assert_eq!(changes, expected_changes);
    }

    #[test]
    fn cutoff_bounds(d in regular_distribution(), k in 0.001f64..0.999) {
        let cutoff = solve_cutoff(&d, k).unwrap();
        prop_assert!(cutoff > d.standard_monopoly_price() - 1e-12);
        prop_assert!(d.cdf(cutoff) > k - 1e-12);
    }

    #[test]
    fn cutoff_is_grid_argmax(d in regular_distribution(), k in 0.02f64..0.98) {
        let cutoff = solve_cutoff(&d, k).unwrap();
        let n = 10_001;
        let step = (d.v_hi() - d.quantile(k)) / n as f64;
        let argmax = grid_argmax_revenue(&d, k, n).unwrap();
        prop_assert!((argmax - cutoff).abs() <= step, "{argmax} vs {cutoff}");
    }

    #[test]
    fn effective_cost_identities(d in regular_distribution(), k in 0.02f64..0.98, t in 0.05f64..0.95) {
        let lo = d.quantile(k);
        let v = lo + (d.v_hi() - lo) * t;
        let revenue = revenue_at_cutoff(&d, k, v).unwrap();
        let cost = effective_cost(&d, k, v).unwrap();
        prop_assert!((revenue - (v * d.sf(v) - cost)).abs() <= 1e-12);
        let h = 1e-6 * (d.v_hi() - lo);
        let fd = central_difference(|x| effective_cost(&d, k, x).unwrap(), v, h);
        let slope = effective_cost_slope(&d, k, v).unwrap();
        prop_assert!(rel_close(slope, fd, 1e-4), "{slope} vs {fd}");
        prop_assert!(slope < 0.0);
    }

    #[test]
    fn comparative_statics(d in regular_distribution(), k in 0.02f64..0.97) {
        let rows = sweep(&d, &[k, k + 0.01]).unwrap().rows;
        let (a, b) = (&rows[0], &rows[1]);
        prop_assert!(b.cutoff > a.cutoff);
        prop_assert!(b.rationing_prob > a.rationing_prob);
        prop_assert!(b.producer_surplus < a.producer_surplus);
        prop_assert!(a.producer_surplus_slope < 0.0);
        prop_assert!(a.rationing_slope > 0.0);
        let lhs = condition_lhs(&d, a.cutoff).unwrap();
        prop_assert_eq!(a.price_slope <= 0.0, lhs >= 2.0, "p' {} lhs {}", a.price_slope, lhs);
        let m = solve_mechanism(&d, k).unwrap();
        prop_assert!((m.cutoff * (1.0 - m.rationing_prob) - m.price).abs() <= 1e-12);
    }

    #[test]
    fn monopolist_entry_helps_every_type(d in regular_distribution(), k in 0.02f64..0.98, t in 0.0f64..=1.0) {
        let v = (d.v_lo() + d.width() * t).min(d.v_hi());
        let u = consumer_surplus(&d, k, v).unwrap();
        if v > 0.0 {
            prop_assert!(u > k * v, "U = {u}, k v = {}", k * v);
        } else {
            prop_assert!(u >= 0.0);
        }
    }

    #[test]
    fn sensitivities_match_sweep_differences(d in regular_distribution(), k in 0.03f64..0.97) {
        let h = 1e-5;
        let rows = sweep(&d, &[k - h, k + h]).unwrap().rows;
        let s = sensitivities(&d, k).unwrap();
        let fd = |a: f64, b: f64| (b - a) / (2.0 * h);
        let pairs = [
            (s.cutoff, fd(rows[0].cutoff, rows[1].cutoff)),
            (s.rationing_prob, fd(rows[0].rationing_prob, rows[1].rationing_prob)),
            (s.producer_surplus, fd(rows[0].producer_surplus, rows[1].producer_surplus)),
        ];
        for (analytic, numeric) in pairs {
            prop_assert!(rel_close(analytic, numeric, 1e-4), "{analytic} vs {numeric}");
        }
        // p' can pass through zero; compare on the scale of its parts
        let p_fd = fd(rows[0].price, rows[1].price);
        let scale = s.cutoff.abs() + d.v_hi() * s.rationing_prob.abs();
        prop_assert!((s.price - p_fd).abs() <= 1e-4 * scale, "{} vs {p_fd}", s.price);
    }

    #[test]
    fn general_objective_beats_validation_grid(
        d in regular_distribution(),
        k in 0.05f64..0.95,
        theta in 0.3f64..=1.0,
        rho_share in 0.0f64..=1.0,
    ) {
        let params = MarketParams::with_public_option(k, theta, rho_share * theta * d.v_lo());
        let g = solve_general(&d, &params).unwrap();
        let n = 100_001;
        let best = (0..n)
            .map(|i| {
                op_objective(&d, &params, grid_point(&d, i, n - 1)).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(g.objective_value >= best - 1e-9, "{} vs {best}", g.objective_value);
    }

    #[test]
    fn general_reduces_to_baseline(d in regular_distribution(), k in 0.05f64..0.95) {
        let g = solve_general(&d, &MarketParams::baseline(k)).unwrap();
        let cutoff = solve_cutoff(&d, k).unwrap();
        prop_assert!((g.cutoff - cutoff).abs() <= 1e-6, "{} vs {cutoff}", g.cutoff);
    }

    #[test]
    fn complement_statics(d in regular_distribution(), k in 0.02f64..0.97, t in 0.0f64..=1.0) {
        let a = complement_outcome(&d, k).unwrap();
        let b = complement_outcome(&d, k + 0.01).unwrap();
        prop_assert_eq!(a.price, b.price);
        prop_assert!(b.producer_surplus < a.producer_surplus);
        let v = (d.v_lo() + d.width() * t).min(d.v_hi());
        prop_assert!(b.surplus(v) >= a.surplus(v));
        if v > a.price {
            prop_assert!(a.surplus(v) > k * v);
        } else {
            prop_assert!((a.surplus(v) - k * v).abs() <= 1e-15 * v.max(1.0));
        }
    }
}

#[test]
fn cutoff_limits_in_capacity() {
    for d in [
        RegularDistribution::uniform(0.0, 1.0).unwrap(),
        RegularDistribution::uniform(1.0, 2.0).unwrap(),
        RegularDistribution::power(2.0).unwrap(),
        RegularDistribution::truncated_normal(0.5, 0.2, 0.0, 1.0).unwrap(),
    ] {
        let low = solve_cutoff(&d, 1e-6).unwrap();
        let high = solve_cutoff(&d, 1.0 - 1e-6).unwrap();
        assert!((low - d.standard_monopoly_price()).abs() < 1e-2, "{low}");
        assert!((high - d.v_hi()).abs() < 1e-2, "{high}");
    }
}

#[test]
fn simulated_revenue_drops_off_the_optimal_price() {
    let d = RegularDistribution::uniform(0.0, 1.0).unwrap();
    let k = 0.5;
    let p = solve_mechanism(&d, k).unwrap().price;
    let n = 1_000_000;
    let best = simulate_market(&d, k, p, n, 21).unwrap();
    for factor in [0.9, 1.1] {
        let off = simulate_market(&d, k, p * factor, n, 22).unwrap();
        let se = best.std_error_revenue.hypot(off.std_error_revenue);
        assert!(
            best.realized_revenue - off.realized_revenue > 3.0 * se,
            "price x{factor}: {} vs {} (se {se})",
            off.realized_revenue,
            best.realized_revenue
        );
    }
}

#[test]
fn simulation_is_thread_count_invariant() {
    let d = RegularDistribution::truncated_normal(0.5, 0.2, 0.0, 1.0).unwrap();
    let p = solve_mechanism(&d, 0.3).unwrap().price;
    let runs: Vec<_> = [1, 2, 3, 8]
        .into_iter()
        .map(|threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_market(&d, 0.3, p, 100_000, 4).unwrap())
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}
