use byzfl::clients::{RateSchedule, Schedule, StepSchedule};
use byzfl::theory::{
    c_beta, classify_gamma, gamma, gamma_minimizing_eta, min_k, round_factor, stable_eta_max,
    theorem1_bound, theorem2_bound, zero_gap_condition, BoundSeries, GammaClass, Theorem2Inputs,
    TheoryParams,
};
use byzfl::verify::min_k_scan;
use proptest::prelude::*;

fn params(eta: f64, mu: f64, l: f64, delta: f64, m: usize, b: usize, k: usize) -> TheoryParams {
    TheoryParams {
        eta,
        mu,
        l_const: l,
        delta,
        m,
        b,
        k,
        w1_gap_sq: 3.0,
    }
}

#[test]
fn min_k_hand_cases() {
    assert_eq!(min_k(0.5, 0.0).unwrap(), 3);
    assert_eq!(min_k(0.9, 0.2).unwrap(), 19);
    assert!(0.9f64.powi(19) * (8.0f64 / 3.0).powi(2) < 1.0);
    assert!(0.9f64.powi(18) * (8.0f64 / 3.0).powi(2) >= 1.0);
    assert!(min_k(1.0, 0.1).is_err());
}

#[test]
fn contractive_bounds_decay_monotonically() {
    let p = params(0.1, 1.0, 2.0, 0.5, 10, 2, 0);
    let g = p.gamma();
    let p = TheoryParams {
        k: min_k(g, p.beta()).unwrap(),
        ..p
    };
    let series = BoundSeries::new(&p, 10_000).unwrap();
    assert!(series.contraction_factor < 1.0);
    for w in series.values.windows(2) {
        assert!(w[1] <= w[0]);
        if w[1] >= f64::MIN_POSITIVE {
            assert!(w[1] < w[0]);
        }
    }
    assert!(*series.values.last().unwrap() < 1e-100);
}

#[test]
fn non_contractive_bounds_do_not_decrease() {
    let p = params(0.1, 1.0, 2.0, 0.5, 10, 2, 1);
    assert!(p.contraction_factor().unwrap() >= 1.0);
    let series = BoundSeries::new(&p, 50).unwrap();
    assert!(series.values.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn series_matches_closed_form() {
    let p = params(0.05, 0.5, 1.5, 0.2, 20, 4, 30);
    let series = BoundSeries::new(&p, 200).unwrap();
    for t in [0, 1, 17, 100, 200] {
        let closed = theorem1_bound(t, &p).unwrap();
        assert!((series.values[t] - closed).abs() <= 1e-12 * closed);
    }
}

#[test]
fn gamma_grid_scan_locates_the_vertex() {
    for (mu, l, delta) in [(1.0, 2.0, 0.0), (0.3, 1.1, 0.7), (2.0, 2.0, 0.0)] {
        let eta_max = stable_eta_max(mu, l, delta).unwrap();
        let vertex = gamma_minimizing_eta(mu, l, delta).unwrap();
        let floor = 1.0 - mu * mu / (l * l * (1.0 + delta * delta));
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..4000 {
            let eta = 2.0 * eta_max * i as f64 / 4000.0;
            let g = gamma(eta, mu, l, delta);
            if g < best.0 {
                best = (g, eta);
            }
            if eta >= eta_max {
                assert!(g >= 1.0 - 1e-15, "eta {eta} >= eta_max gave gamma {g}");
                assert_eq!(classify_gamma(g.max(1.0)), GammaClass::NonContractive);
            }
        }
        assert!((best.1 - vertex).abs() <= eta_max / 1000.0);
        assert!((gamma(vertex, mu, l, delta) - floor).abs() <= 1e-14);
    }
}

#[test]
fn c_beta_is_increasing_from_two() {
    assert_eq!(c_beta(0.0).unwrap(), 2.0);
    let mut last = 2.0;
    for i in 1..500 {
        let c = c_beta(i as f64 / 1000.0).unwrap();
        assert!(c > last);
        last = c;
    }
    assert!(c_beta(0.5).is_err());
}

#[test]
fn uniform_zero_gap_condition_matches_contraction() {
    let honest: Vec<usize> = (0..8).collect();
    for k in 1..30 {
        let schedule = Schedule::uniform(k, 0.1);
        let inputs = Theorem2Inputs {
            schedule: &schedule,
            honest: &honest,
            mu: 1.0,
            l_const: 2.0,
            delta: 0.5,
            m: 10,
            b: 2,
            l_prefactor: 2.0,
            w1_gap_sq: 1.0,
        };
        let g = gamma(0.1, 1.0, 2.0, 0.5);
        let contracts = g.powi(k as i32) * c_beta(0.2).unwrap().powi(2) < 1.0;
        assert_eq!(
            zero_gap_condition(1, &inputs).unwrap(),
            contracts,
            "K = {k}"
        );
    }
}

#[test]
fn general_bound_is_the_product_of_round_factors() {
    let honest = [0usize, 2, 3];
    let schedule = Schedule {
        steps: StepSchedule::Cycle(vec![2, 5, 3]),
        rate: RateSchedule::PerClient(vec![0.05, 0.5, 0.1, 0.15]),
    };
    let inputs = Theorem2Inputs {
        schedule: &schedule,
        honest: &honest,
        mu: 1.0,
        l_const: 2.0,
        delta: 0.3,
        m: 4,
        b: 1,
        l_prefactor: 2.0,
        w1_gap_sq: 2.5,
    };
    let c2 = c_beta(0.25).unwrap().powi(2);
    let mut expected = 0.5 * 2.0 * 2.5;
    for i in 1..=12 {
        let k = schedule.steps.steps(i);
        let sum: f64 = honest
            .iter()
            .map(|&m| gamma(schedule.rate.rate(i, m, 1), 1.0, 2.0, 0.3).powi(k as i32))
            .sum();
        let factor = round_factor(i, &inputs).unwrap();
        assert!((factor.multiplier - c2 * sum / 3.0).abs() <= 1e-14 * factor.multiplier);
        expected *= c2 * sum / 3.0;
        let got = theorem2_bound(i, &inputs).unwrap().value;
        assert!((got - expected).abs() <= 1e-12 * expected);
    }
}

proptest! {
    #[test]
    fn min_k_equals_exhaustive_scan(g in 1e-6f64..0.9999, beta in 0.0f64..0.49) {
        prop_assert_eq!(min_k(g, beta).ok(), min_k_scan(g, beta));
    }

    #[test]
    fn uniform_general_bound_equals_uniform_bound(
        mu in 0.1f64..2.0,
        ratio in 1.0f64..4.0,
        delta in 0.0f64..1.0,
        frac in 0.05f64..0.95,
        m in 3usize..40,
        bfrac in 0.0f64..0.49,
        k in 1usize..20,
    ) {
        let l = mu * ratio;
        let b = ((m as f64) * bfrac).floor() as usize;
        prop_assume!(2 * b < m);
        let eta = frac * stable_eta_max(mu, l, delta).unwrap();
        let p = TheoryParams { eta, mu, l_const: l, delta, m, b, k, w1_gap_sq: 1.7 };
        let schedule = Schedule::uniform(k, eta);
        let honest: Vec<usize> = (0..m - b).collect();
        let inputs = Theorem2Inputs {
            schedule: &schedule,
            honest: &honest,
            mu,
            l_const: l,
            delta,
            m,
            b,
            l_prefactor: l,
            w1_gap_sq: 1.7,
        };
        for t in [0usize, 1, 2, 10, 50, 100] {
            let a = theorem1_bound(t, &p).unwrap();
            let g = theorem2_bound(t, &inputs).unwrap().value;
            if a >= f64::MIN_POSITIVE && a.is_finite() {
                prop_assert!((a - g).abs() <= 1e-12 * a, "t = {}: {} vs {}", t, a, g);
            }
        }
    }
}
