use byzfl::aggregation::{coordinate_median, geometric_median_traced, mean};
use byzfl::{
    ball_robustness_check, geomed_objective, geometric_median, ParamVector, WeiszfeldConfig,
};
use proptest::prelude::*;

fn points(
    n: std::ops::RangeInclusive<usize>,
    p: usize,
    scale: f64,
) -> impl Strategy<Value = Vec<ParamVector>> {
    prop::collection::vec(prop::collection::vec(-scale..scale, p), n)
        .prop_map(|rows| rows.into_iter().map(ParamVector::new).collect())
}

fn cloud() -> impl Strategy<Value = Vec<ParamVector>> {
    (1usize..=6).prop_flat_map(|p| points(2..=12, p, 10.0))
}

/// Non-collinear with probability one, so the minimizer is unique.
fn generic_cloud() -> impl Strategy<Value = Vec<ParamVector>> {
    (2usize..=6).prop_flat_map(|p| points(3..=12, p, 10.0))
}

/// Grid minimizer of the objective over `[lo, hi]^2` at `steps` per axis.
fn grid_min(pts: &[ParamVector], lo: [f64; 2], hi: [f64; 2], steps: usize) -> (f64, ParamVector) {
    let mut best = (f64::INFINITY, ParamVector::zeros(2));
    for i in 0..=steps {
        for j in 0..=steps {
            let z = ParamVector::new(vec![
                lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64,
            ]);
            let f = geomed_objective(pts, &z).unwrap();
            if f < best.0 {
                best = (f, z);
            }
        }
    }
    best
}

#[test]
fn one_dimensional_example_matches_grid_search() {
    let pts: Vec<ParamVector> = [0.0, 1.0, 10.0]
        .iter()
        .map(|&x| ParamVector::new(vec![x]))
        .collect();
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=120_000 {
        let z = -1.0 + 1e-4 * i as f64;
        let f = geomed_objective(&pts, &ParamVector::new(vec![z])).unwrap();
        if f < best.0 {
            best = (f, z);
        }
    }
    let gm = geometric_median(&pts, &WeiszfeldConfig::default()).unwrap();
    assert_eq!(gm.value[0], 1.0);
    assert!((best.1 - 1.0).abs() <= 1e-4);
}

#[test]
fn majority_example_matches_grid_oracle() {
    let pts: Vec<ParamVector> = [
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [50.0, 50.0],
        [-99.0, 3.0],
    ]
    .iter()
    .map(|v| ParamVector::new(v.to_vec()))
    .collect();
    let gm = geometric_median(&pts, &WeiszfeldConfig::default()).unwrap();
    assert_eq!(gm.value, ParamVector::zeros(2));
    let (f, z) = grid_min(&pts, [-1.0, -1.0], [1.0, 1.0], 200);
    assert_eq!(z, ParamVector::zeros(2));
    assert_eq!(f, gm.objective);
}

#[test]
fn ball_example_with_three_honest_points() {
    let pts: Vec<ParamVector> = [
        [0.5, 0.0],
        [-0.3, 0.6],
        [0.0, -0.9],
        [1e3, -4e2],
        [-7e5, 2e5],
    ]
    .iter()
    .map(|v| ParamVector::new(v.to_vec()))
    .collect();
    let center = ParamVector::zeros(2);
    assert!(ball_robustness_check(&pts, &center, 1.0, 2).unwrap());
    let gm = geometric_median(&pts, &WeiszfeldConfig::default()).unwrap();
    assert!(gm.value.norm() <= 6.0);
    let (f, z) = grid_min(&pts, [-6.0, -6.0], [6.0, 6.0], 600);
    assert!(gm.objective <= f + 1e-9);
    assert!(gm.value.dist(&z) <= 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn translation_equivariance(pts in generic_cloud(), shift in -50.0f64..50.0) {
        let cfg = WeiszfeldConfig::default();
        let c = ParamVector::new(vec![shift; pts[0].dim()]);
        let moved: Vec<_> = pts.iter().map(|x| x.add(&c)).collect();
        let a = geometric_median(&pts, &cfg).unwrap().value;
        let b = geometric_median(&moved, &cfg).unwrap().value;
        prop_assert!(b.dist(&a.add(&c)) <= 10.0 * cfg.tol);
    }

    #[test]
    fn scaling_equivariance(pts in generic_cloud(), s in 0.01f64..100.0) {
        let cfg = WeiszfeldConfig::default();
        let scaled: Vec<_> = pts.iter().map(|x| x.scale(s)).collect();
        let a = geometric_median(&pts, &cfg).unwrap().value;
        let b = geometric_median(&scaled, &cfg).unwrap().value;
        prop_assert!(b.dist(&a.scale(s)) <= 10.0 * s * cfg.tol);
    }

    #[test]
    fn objective_is_at_most_inputs_mean_and_perturbations(pts in cloud(), seed in 0u64..1000) {
        let cfg = WeiszfeldConfig::default();
        let gm = geometric_median(&pts, &cfg).unwrap();
        let n = pts.len() as f64;
        let slack = n * cfg.tol;
        for x in &pts {
            prop_assert!(gm.objective <= geomed_objective(&pts, x).unwrap() + slack);
        }
        prop_assert!(gm.objective <= geomed_objective(&pts, &mean(&pts).unwrap()).unwrap() + slack);
        prop_assert!(gm.objective <= geomed_objective(&pts, &coordinate_median(&pts).unwrap()).unwrap() + slack);
        let p = pts[0].dim();
        for i in 0..100u64 {
            let r = (seed * 131 + i) as f64;
            let d = ParamVector::new((0..p).map(|j| ((r * 0.7548 + j as f64 * 0.5698).fract() - 0.5) * 1e-3).collect());
            prop_assert!(gm.objective <= geomed_objective(&pts, &gm.value.add(&d)).unwrap() + slack);
        }
    }

    #[test]
    fn weiszfeld_descent_is_monotone(pts in cloud()) {
        let (_, history) = geometric_median_traced(&pts, &WeiszfeldConfig::default()).unwrap();
        for w in history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn converged_implies_small_residual(pts in cloud()) {
        let cfg = WeiszfeldConfig::default();
        let gm = geometric_median(&pts, &cfg).unwrap();
        prop_assert!(gm.iterations <= cfg.max_iters);
        if gm.converged {
            prop_assert!(gm.residual <= cfg.tol);
        }
    }

    #[test]
    fn odd_one_dimensional_inputs_reduce_to_the_median(pts in (0usize..=8).prop_flat_map(|h| points(2 * h + 1..=2 * h + 1, 1, 100.0))) {
        let cfg = WeiszfeldConfig::default();
        let gm = geometric_median(&pts, &cfg).unwrap();
        let med = coordinate_median(&pts).unwrap();
        prop_assert!((gm.value[0] - med[0]).abs() <= cfg.tol);
    }

    #[test]
    fn strict_majority_is_returned_bitwise(
        z in prop::collection::vec(-5.0f64..5.0, 3),
        others in points(0..=6, 3, 1e6),
        extra in 1usize..4,
    ) {
        let z = ParamVector::new(z);
        let copies = others.len() + extra;
        let mut pts = vec![z.clone(); copies];
        pts.extend(others);
        pts.rotate_left(copies / 2);
        let gm = geometric_median(&pts, &WeiszfeldConfig::default()).unwrap();
        prop_assert_eq!(gm.value, z);
    }
}
