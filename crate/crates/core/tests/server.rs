use byzfl::clients::{standard_roster, AttackKind, MeanMode};
use byzfl::config::{ProblemConfig, RateSpec, ScheduleSpec, StepsSpec};
use byzfl::problems::GradOracleMode;
use byzfl::server::build_problem;
use byzfl::{Aggregator, Experiment, ExperimentConfig, ParamVector, TraceRecord, WeiszfeldConfig};

fn base() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemConfig {
            dim: 5,
            users: 12,
            samples_per_user: 40,
            heterogeneity: 0.4,
            ..Default::default()
        },
        beta: 0.25,
        schedule: ScheduleSpec {
            steps: StepsSpec::Constant(3),
            rate: RateSpec::Constant(0.05),
        },
        oracle: GradOracleMode::Minibatch { batch_size: 8 },
        rounds: 15,
        seed: 7,
        ..Default::default()
    }
}

fn trace_bytes(trace: &[TraceRecord]) -> String {
    trace
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect()
}

#[test]
fn geometric_median_stays_within_the_robustness_radius() {
    let mut cfg = base();
    cfg.problem.users = 5;
    cfg.beta = 0.4;
    let v = ParamVector::new(vec![1e6 / 5f64.sqrt(); 5]);
    cfg.attack = AttackKind::FixedVector { v };
    cfg.oracle = GradOracleMode::FullGradient;
    let exp = Experiment::new(&cfg).unwrap();
    assert_eq!(exp.num_byzantine(), 2);
    let w_star = exp.optimum().w_star.clone();
    let mut w = exp.initial_point().clone();
    for t in 1..=10 {
        let uploads = exp.collect_uploads(&w, t, false).unwrap();
        let radius = exp
            .honest_ids()
            .iter()
            .map(|&m| uploads[m].dist(&w_star))
            .fold(0.0, f64::max);
        let (next, _) = exp.run_round(&w, t).unwrap();
        assert!(next.dist(&w_star) <= 6.0 * radius, "round {t}");
        w = next;
    }
}

#[test]
fn same_seed_gives_byte_identical_traces() {
    let cfg = base();
    let a = trace_bytes(&Experiment::new(&cfg).unwrap().run().unwrap());
    let b = trace_bytes(&Experiment::new(&cfg).unwrap().run().unwrap());
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed = 8;
    assert_ne!(
        a,
        trace_bytes(&Experiment::new(&other).unwrap().run().unwrap())
    );
}

#[test]
fn parallel_and_serial_runs_agree() {
    let mut cfg = base();
    cfg.attack = AttackKind::Gaussian {
        mean: MeanMode::HonestCenter,
        sigma: 3.0,
    };
    cfg.oracle = GradOracleMode::RelativeNoise { delta: 0.3 };
    cfg.problem.heterogeneity = 0.0;
    cfg.schedule.rate = RateSpec::PerClientRandom { lo: 0.5, hi: 1.0 };
    let exp = Experiment::new(&cfg).unwrap();
    assert_eq!(exp.run_with(true).unwrap(), exp.run_with(false).unwrap());
}

#[test]
fn client_order_does_not_change_the_trace() {
    let cfg = base();
    let problem = build_problem(&cfg).unwrap();
    let roster = standard_roster(12, cfg.num_byzantine(), &cfg.attack);
    let mut shuffled = roster.clone();
    shuffled.reverse();
    shuffled.swap(2, 7);
    for agg in [
        Aggregator::GeometricMedian(WeiszfeldConfig::default()),
        Aggregator::Mean,
        Aggregator::CoordinateMedian,
        Aggregator::TrimmedMean { fraction: 0.25 },
    ] {
        let mut cfg = cfg.clone();
        cfg.aggregator = agg;
        let a = Experiment::assemble(&cfg, problem.clone(), roster.clone()).unwrap();
        let b = Experiment::assemble(&cfg, problem.clone(), shuffled.clone()).unwrap();
        assert_eq!(a.run().unwrap(), b.run().unwrap(), "{}", agg.name());
    }
}

#[test]
fn trace_records_are_complete_and_gaps_nonnegative() {
    let mut cfg = base();
    cfg.oracle = GradOracleMode::FullGradient;
    cfg.problem.heterogeneity = 0.0;
    cfg.schedule = ScheduleSpec::default();
    cfg.rounds = 30;
    let trace = Experiment::new(&cfg).unwrap().run().unwrap();
    assert_eq!(trace.len(), 30);
    for (i, r) in trace.iter().enumerate() {
        assert_eq!(r.t, i + 1);
        assert!(r.optimality_gap >= -1e-9);
        assert!(r.theorem1_bound.is_some() && r.theorem2_bound.is_some());
        assert!(r.optimality_gap <= r.theorem1_bound.unwrap() + 1e-9);
        let json: serde_json::Value = serde_json::to_value(r).unwrap();
        for key in [
            "t",
            "global_loss",
            "optimality_gap",
            "dist_to_opt_sq",
            "theorem1_bound",
            "theorem2_bound",
            "nonpositive_gamma",
            "aggregator_iterations",
            "aggregator_residual",
            "aggregator_converged",
            "wall_time_ms",
            "test_accuracy",
            "assumption_violating",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn honest_only_and_corrupted_geomed_runs_both_converge() {
    let mut cfg = ExperimentConfig {
        problem: ProblemConfig {
            dim: 4,
            users: 10,
            samples_per_user: 50,
            ..Default::default()
        },
        rounds: 60,
        attack: AttackKind::Gaussian {
            mean: MeanMode::Zero,
            sigma: 100.0,
        },
        ..Default::default()
    };
    for beta in [0.0, 0.4] {
        cfg.beta = beta;
        let trace = Experiment::new(&cfg).unwrap().run().unwrap();
        assert!(trace.last().unwrap().optimality_gap <= 1e-8, "beta {beta}");
    }
    cfg.aggregator = Aggregator::Mean;
    let trace = Experiment::new(&cfg).unwrap().run().unwrap();
    assert!(trace.last().unwrap().optimality_gap > 1e2);
}

#[test]
fn unequal_sample_counts_are_warned_about() {
    use byzfl::problems::{Dataset, LossKind, Problem};
    let a = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap();
    let b = Dataset::new(vec![vec![1.0, 1.0]], vec![0.5]).unwrap();
    let problem = Problem::new(vec![a.clone(), b, a], LossKind::Ridge { lambda: 0.5 }).unwrap();
    let mut cfg = base();
    cfg.oracle = GradOracleMode::FullGradient;
    let roster = standard_roster(3, 0, &cfg.attack);
    let exp = Experiment::assemble(&cfg, problem, roster).unwrap();
    assert!(exp.warnings().iter().any(|w| w.contains("sample counts")));
}

#[test]
fn resolved_config_round_trips_through_json() {
    let mut cfg = base();
    cfg.oracle = GradOracleMode::FullGradient;
    cfg.schedule.rate = RateSpec::PerClientRandom { lo: 0.5, hi: 1.0 };
    let exp = Experiment::new(&cfg).unwrap();
    let resolved = exp.config().clone();
    assert!(matches!(resolved.schedule.rate, RateSpec::PerClient(_)));
    let parsed = ExperimentConfig::from_json(&resolved.to_json()).unwrap();
    assert_eq!(parsed, resolved);
    assert_eq!(
        Experiment::new(&parsed).unwrap().run().unwrap(),
        exp.run().unwrap()
    );
}
