//! Fixed-seed property suites backing `byzfl verify`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::aggregation::{
    ball_robustness_check, geomed_objective, geometric_median, RobustnessCert, WeiszfeldConfig,
};
use crate::clients::{AttackKind, MeanMode};
use crate::config::{ExperimentConfig, ProblemConfig, RateSpec, ScheduleSpec, StepsSpec};
use crate::error::Result;
use crate::problems::{make_synthetic, GradOracleMode, LossKind, Problem};
use crate::rng::{Purpose, RngContract};
use crate::server::Experiment;
use crate::theory::{self, c_beta, min_k};
use crate::vector::ParamVector;

const SUITE_SEED: u64 = 0x5eed;

/// Result of one property over all of its cases.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: String,
    pub cases: usize,
    pub passed: bool,
    /// Summary on success, first counterexample on failure.
    pub detail: String,
}

impl PropertyOutcome {
    fn new(name: &str, cases: usize, failure: Option<String>, summary: String) -> Self {
        PropertyOutcome {
            name: name.to_string(),
            cases,
            passed: failure.is_none(),
            detail: failure.unwrap_or(summary),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Geomed,
    Assumptions,
    Bounds,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Geomed, Suite::Assumptions, Suite::Bounds];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Geomed => "geomed",
            Suite::Assumptions => "assumptions",
            Suite::Bounds => "bounds",
        }
    }

    pub fn run(self) -> Vec<PropertyOutcome> {
        match self {
            Suite::Geomed => geomed_suite(),
            Suite::Assumptions => assumptions_suite(),
            Suite::Bounds => bounds_suite(),
        }
    }
}

fn suite_rng(tag: u64) -> ChaCha8Rng {
    RngContract::new(SUITE_SEED).stream_for(Purpose::Auxiliary, tag, 0, 0)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, p: usize, scale: f64) -> ParamVector {
    ParamVector::new((0..p).map(|_| scale * normal(rng)).collect())
}

fn unit_vec<R: Rng + ?Sized>(rng: &mut R, p: usize) -> ParamVector {
    loop {
        let v = gaussian_vec(rng, p, 1.0);
        let n = v.norm();
        if n > 1e-12 {
            return v.scale(1.0 / n);
        }
    }
}

// ---------------------------------------------------------------- geomed

/// A ball-robustness instance: `n - q` points inside the ball, `q` outliers.
#[derive(Debug, Clone)]
pub struct BallCase {
    pub points: Vec<ParamVector>,
    pub center: ParamVector,
    pub radius: f64,
    pub q: usize,
}

pub fn random_ball_case<R: Rng + ?Sized>(rng: &mut R, p: usize) -> BallCase {
    let n = rng.random_range(1..=25usize);
    let q = rng.random_range(0..=(n - 1) / 2);
    let center = gaussian_vec(rng, p, 3.0);
    let radius = rng.random_range(0.1..5.0);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n - q {
        let r = radius * rng.random::<f64>().powf(1.0 / p as f64) * 0.999;
        points.push(center.add(&unit_vec(rng, p).scale(r)));
    }
    for _ in 0..q {
        let norm = 10f64.powf(rng.random_range(-1.0..6.0));
        points.push(unit_vec(rng, p).scale(norm));
    }
    BallCase {
        points,
        center,
        radius,
        q,
    }
}

/// The median's objective is no worse than any point of a coarse grid over
/// the data's bounding box or a fine grid around the median itself.
fn grid_optimal(points: &[ParamVector], z: &ParamVector) -> std::result::Result<(), String> {
    let fz = geomed_objective(points, z).map_err(|e| e.to_string())?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for x in points {
        for d in 0..2 {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
        }
    }
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let slack = 1e-12 * fz.max(1.0);
    let grids = [
        ([lo[0], lo[1]], [hi[0], hi[1]], 40),
        (
            [z[0] - 1e-3 * scale, z[1] - 1e-3 * scale],
            [z[0] + 1e-3 * scale, z[1] + 1e-3 * scale],
            20,
        ),
    ];
    for (a, b, steps) in grids {
        for i in 0..=steps {
            for j in 0..=steps {
                let g = ParamVector::new(vec![
                    a[0] + (b[0] - a[0]) * i as f64 / steps as f64,
                    a[1] + (b[1] - a[1]) * j as f64 / steps as f64,
                ]);
                let fg = geomed_objective(points, &g).map_err(|e| e.to_string())?;
                if fg < fz - slack {
                    return Err(format!(
                        "grid point {g:?} has objective {fg} < {fz} at {z:?}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Subgradient residual accepted as an optimality certificate when no grid
/// oracle is available.
pub const CERTIFICATE_RESIDUAL: f64 = 1e-6;

fn check_ball_case(case: &BallCase, cfg: &WeiszfeldConfig) -> std::result::Result<(), String> {
    let ok = ball_robustness_check(&case.points, &case.center, case.radius, case.q)
        .map_err(|e| e.to_string())?;
    let gm = geometric_median(&case.points, cfg).map_err(|e| e.to_string())?;
    let cert = RobustnessCert::new(case.points.len(), case.q).map_err(|e| e.to_string())?;
    if !ok {
        return Err(format!(
            "median at distance {} from center exceeds {} * {}",
            gm.value.dist(&case.center),
            cert.c_alpha,
            case.radius
        ));
    }
    if case.center.dim() == 2 {
        grid_optimal(&case.points, &gm.value)
    } else if gm.residual > CERTIFICATE_RESIDUAL {
        Err(format!(
            "certificate residual {} > {CERTIFICATE_RESIDUAL}",
            gm.residual
        ))
    } else {
        Ok(())
    }
}

pub fn ball_robustness_property(cases: usize) -> PropertyOutcome {
    let mut rng = suite_rng(1);
    let cfg = WeiszfeldConfig::default();
    let mut failure = None;
    let mut grid_cases = 0;
    for i in 0..cases {
        let p = if rng.random_bool(0.3) {
            2
        } else {
            rng.random_range(1..=16usize)
        };
        grid_cases += usize::from(p == 2);
        let case = random_ball_case(&mut rng, p);
        if let Err(msg) = check_ball_case(&case, &cfg) {
            failure = Some(format!("case {i}: {msg}; case = {case:?}"));
            break;
        }
    }
    PropertyOutcome::new(
        "ball robustness",
        cases,
        failure,
        format!("{cases} cases ({grid_cases} checked on a 2-D grid)"),
    )
}

pub fn one_dim_reduction_property(cases: usize) -> PropertyOutcome {
    let mut rng = suite_rng(2);
    let cfg = WeiszfeldConfig::default();
    let mut failure = None;
    for i in 0..cases {
        let n = rng.random_range(1..=20usize);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let pts: Vec<ParamVector> = (0..n)
            .map(|_| ParamVector::new(vec![scale * normal(&mut rng)]))
            .collect();
        let mut xs: Vec<f64> = pts.iter().map(|v| v[0]).collect();
        xs.sort_by(f64::total_cmp);
        let (lo, hi) = if n % 2 == 1 {
            (xs[n / 2], xs[n / 2])
        } else {
            (xs[n / 2 - 1], xs[n / 2])
        };
        let z = match geometric_median(&pts, &cfg) {
            Ok(r) => r.value[0],
            Err(e) => {
                failure = Some(format!("case {i}: {e}"));
                break;
            }
        };
        if z < lo - cfg.tol || z > hi + cfg.tol {
            failure = Some(format!(
                "case {i}: median {z} outside [{lo}, {hi}] for {xs:?}"
            ));
            break;
        }
    }
    PropertyOutcome::new(
        "1-D median reduction",
        cases,
        failure,
        format!("{cases} cases within tol"),
    )
}

pub fn equivariance_property(cases: usize) -> PropertyOutcome {
    let mut rng = suite_rng(3);
    let cfg = WeiszfeldConfig::default();
    let bound = 10.0 * cfg.tol;
    let mut failure = None;
    let mut worst = 0.0f64;
    for i in 0..cases {
        let p = rng.random_range(2..=6usize);
        let n = rng.random_range(3..=12usize);
        let pts: Vec<ParamVector> = (0..n).map(|_| gaussian_vec(&mut rng, p, 1.0)).collect();
        let a = rng.random_range(0.5..2.0);
        let b = gaussian_vec(&mut rng, p, 1.0);
        let moved: Vec<ParamVector> = pts.iter().map(|x| x.scale(a).add(&b)).collect();
        let (base, image) = match (geometric_median(&pts, &cfg), geometric_median(&moved, &cfg)) {
            (Ok(x), Ok(y)) => (x.value, y.value),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(format!("case {i}: {e}"));
                break;
            }
        };
        let err = image.dist(&base.scale(a).add(&b));
        worst = worst.max(err);
        if err > bound {
            failure = Some(format!(
                "case {i}: ||gm(aX+b) - (a gm(X) + b)|| = {err} > {bound}"
            ));
            break;
        }
    }
    PropertyOutcome::new(
        "translation/scaling equivariance",
        cases,
        failure,
        format!("{cases} cases, worst deviation {worst:.3e}"),
    )
}

pub fn majority_exactness_property(cases: usize) -> PropertyOutcome {
    let mut rng = suite_rng(4);
    let cfg = WeiszfeldConfig::default();
    let mut failure = None;
    for i in 0..cases {
        let p = rng.random_range(1..=8usize);
        let n = rng.random_range(1..=15usize);
        let k = n / 2 + 1;
        let z = gaussian_vec(&mut rng, p, 2.0);
        let mut pts = vec![z.clone(); k];
        pts.extend((k..n).map(|_| gaussian_vec(&mut rng, p, 1e3)));
        let pos = rng.random_range(0..n);
        pts.swap(0, pos);
        match geometric_median(&pts, &cfg) {
            Ok(r) if r.value == z => {}
            Ok(r) => {
                failure = Some(format!(
                    "case {i}: majority point {z:?} but median {:?}",
                    r.value
                ));
                break;
            }
            Err(e) => {
                failure = Some(format!("case {i}: {e}"));
                break;
            }
        }
    }
    PropertyOutcome::new(
        "strict-majority exactness",
        cases,
        failure,
        format!("{cases} cases exact"),
    )
}

pub fn geomed_suite() -> Vec<PropertyOutcome> {
    vec![
        ball_robustness_property(10_000),
        one_dim_reduction_property(1_000),
        equivariance_property(1_000),
        majority_exactness_property(1_000),
    ]
}

// ----------------------------------------------------------- assumptions

/// Relative slack on the certified curvature inequalities.
const CURVATURE_SLACK: f64 = 1e-9;

pub fn curvature_property(
    name: &str,
    problem: &Problem,
    pairs: usize,
    tag: u64,
) -> PropertyOutcome {
    let run = || -> Result<std::result::Result<String, String>> {
        let c = problem.constants(GradOracleMode::FullGradient)?;
        let mut rng = suite_rng(tag);
        let p = problem.dim();
        let (mut min_ratio, mut max_ratio) = (f64::INFINITY, 0.0f64);
        for i in 0..pairs {
            let w = gaussian_vec(&mut rng, p, 2.0);
            let step = 10f64.powf(rng.random_range(-3.0..0.5));
            let v = w.add(&gaussian_vec(&mut rng, p, step));
            let (gw, gv) = (problem.global_gradient(&w)?, problem.global_gradient(&v)?);
            let (fw, fv) = (problem.global_loss(&w)?, problem.global_loss(&v)?);
            let d = v.sub(&w);
            let d2 = d.norm_sq();
            let dg = gv.sub(&gw);
            let mono = dg.dot(&d);
            if mono < c.mu * d2 * (1.0 - CURVATURE_SLACK) {
                return Ok(Err(format!(
                    "pair {i}: <g(v)-g(w), v-w> = {mono} < mu ||v-w||^2 = {}",
                    c.mu * d2
                )));
            }
            if dg.norm() > c.l_const * d.norm() * (1.0 + CURVATURE_SLACK) {
                return Ok(Err(format!(
                    "pair {i}: ||g(v)-g(w)|| = {} > L ||v-w|| = {}",
                    dg.norm(),
                    c.l_const * d.norm()
                )));
            }
            let lin = fw + gw.dot(&d);
            let fslack = CURVATURE_SLACK * (fv.abs() + fw.abs() + 1.0);
            if fv < lin + 0.5 * c.mu * d2 - fslack || fv > lin + 0.5 * c.l_const * d2 + fslack {
                return Ok(Err(format!(
                    "pair {i}: F(v) = {fv} outside the quadratic sandwich"
                )));
            }
            min_ratio = min_ratio.min(mono / d2);
            max_ratio = max_ratio.max(dg.norm() / d.norm());
        }
        Ok(Ok(format!(
            "mu = {:.6}, L = {:.6}; observed curvature in [{min_ratio:.6}, {max_ratio:.6}]",
            c.mu, c.l_const
        )))
    };
    match run() {
        Ok(Ok(summary)) => PropertyOutcome::new(name, pairs, None, summary),
        Ok(Err(msg)) => PropertyOutcome::new(name, pairs, Some(msg), String::new()),
        Err(e) => PropertyOutcome::new(name, pairs, Some(e.to_string()), String::new()),
    }
}

pub fn relative_noise_property(problem: &Problem, draws: usize, delta: f64) -> PropertyOutcome {
    let name = "relative-noise bound";
    let mode = GradOracleMode::RelativeNoise { delta };
    let mut rng = suite_rng(20);
    let p = problem.dim();
    let mut failure = None;
    for i in 0..draws {
        let w = gaussian_vec(&mut rng, p, 2.0);
        let m = rng.random_range(0..problem.num_users());
        let outcome = problem.global_gradient(&w).and_then(|g| {
            problem
                .local_stoch_grad(m, &w, mode, &mut rng)
                .map(|s| (s.dist(&g), delta * g.norm()))
        });
        match outcome {
            Ok((noise, allowed)) if noise <= allowed * (1.0 + 1e-12) + 1e-300 => {}
            Ok((noise, allowed)) => {
                failure = Some(format!(
                    "draw {i}: noise {noise} > delta ||grad F|| = {allowed}"
                ));
                break;
            }
            Err(e) => {
                failure = Some(format!("draw {i}: {e}"));
                break;
            }
        }
    }
    PropertyOutcome::new(
        name,
        draws,
        failure,
        format!("{draws} draws with delta = {delta}"),
    )
}

pub fn optimum_property(name: &str, problem: &Problem) -> PropertyOutcome {
    let check = || -> Result<std::result::Result<String, String>> {
        let opt = problem.optimum()?;
        let g = problem.global_gradient(&opt.w_star)?.norm();
        Ok(if g <= 1e-8 {
            Ok(format!("||grad F(w*)|| = {g:.3e}"))
        } else {
            Err(format!("||grad F(w*)|| = {g} > 1e-8"))
        })
    };
    match check() {
        Ok(Ok(s)) => PropertyOutcome::new(name, 1, None, s),
        Ok(Err(s)) => PropertyOutcome::new(name, 1, Some(s), String::new()),
        Err(e) => PropertyOutcome::new(name, 1, Some(e.to_string()), String::new()),
    }
}

pub fn assumptions_suite() -> Vec<PropertyOutcome> {
    let ridge = make_synthetic(10, 20, 40, 11, 0.5, LossKind::Ridge { lambda: 0.1 });
    let logistic = make_synthetic(6, 10, 60, 12, 0.5, LossKind::Logistic { lambda: 0.05 });
    let (ridge, logistic) = match (ridge, logistic) {
        (Ok(r), Ok(l)) => (r, l),
        (Err(e), _) | (_, Err(e)) => {
            return vec![PropertyOutcome::new(
                "problem setup",
                0,
                Some(e.to_string()),
                String::new(),
            )]
        }
    };
    vec![
        curvature_property("ridge strong convexity and smoothness", &ridge, 1_000, 21),
        curvature_property(
            "logistic strong convexity and smoothness",
            &logistic,
            1_000,
            22,
        ),
        relative_noise_property(&ridge, 1_000, 0.5),
        optimum_property("ridge stationarity at w*", &ridge),
        optimum_property("logistic stationarity at w*", &logistic),
    ]
}

// ---------------------------------------------------------------- bounds

/// First `K` with `gamma^K C^2 < 1`, by direct scan.
pub fn min_k_scan(gamma_val: f64, beta: f64) -> Option<usize> {
    let c2 = c_beta(beta).ok()?.powi(2);
    (1..=10_000_000usize).find(|&k| gamma_val.powf(k as f64) * c2 < 1.0)
}

pub fn min_k_property(cases: usize) -> PropertyOutcome {
    let mut rng = suite_rng(30);
    let mut failure = None;
    let hand = [(0.5, 0.0, 3usize), (0.9, 0.2, 19)];
    for (g, b, want) in hand {
        if min_k(g, b).ok() != Some(want) {
            failure = Some(format!(
                "min_K({g}, {b}) = {:?}, expected {want}",
                min_k(g, b)
            ));
        }
    }
    for i in 0..cases {
        if failure.is_some() {
            break;
        }
        let g = if rng.random_bool(0.5) {
            rng.random_range(0.0..1.0)
        } else {
            1.0 - 10f64.powf(rng.random_range(-4.0..0.0))
        };
        let b = rng.random_range(0.0..0.49);
        let fast = min_k(g, b).ok();
        let scan = min_k_scan(g, b);
        if g > 0.0 && fast != scan {
            failure = Some(format!(
                "case {i}: gamma = {g}, beta = {b}: min_K {fast:?} vs scan {scan:?}"
            ));
        }
    }
    PropertyOutcome::new(
        "min_K matches exhaustive scan",
        cases + hand.len(),
        failure,
        format!("{} cases", cases + hand.len()),
    )
}

fn random_attack<R: Rng + ?Sized>(rng: &mut R, p: usize) -> AttackKind {
    match rng.random_range(0..5) {
        0 => AttackKind::Gaussian {
            mean: MeanMode::Zero,
            sigma: 10.0,
        },
        1 => AttackKind::Gaussian {
            mean: MeanMode::HonestCenter,
            sigma: 100.0,
        },
        2 => AttackKind::SignFlip { scale: 5.0 },
        3 => AttackKind::ZeroVector,
        _ => AttackKind::FixedVector {
            v: gaussian_vec(rng, p, 1e4),
        },
    }
}

/// A random theorem-faithful configuration: identical client data, exact
/// gradients, a stable rate, and `K >= min_K`.
pub fn random_contractive_config<R: Rng + ?Sized>(
    rng: &mut R,
    rounds: usize,
) -> Result<ExperimentConfig> {
    let p = rng.random_range(2..=6usize);
    let users = rng.random_range(5..=20usize);
    let beta_steps = [0.0, 0.1, 0.2, 0.3, 0.4];
    let mut beta = beta_steps[rng.random_range(0..beta_steps.len())];
    if 2 * (beta * users as f64).round() as usize >= users {
        beta = 0.0;
    }
    let problem = ProblemConfig {
        dim: p,
        users,
        samples_per_user: rng.random_range(p + 2..=40),
        heterogeneity: 0.0,
        loss: LossKind::Ridge {
            lambda: rng.random_range(0.1..2.0),
        },
        data_seed: rng.random(),
        csv_files: Vec::new(),
    };
    let built = make_synthetic(
        p,
        users,
        problem.samples_per_user,
        problem.data_seed,
        0.0,
        problem.loss,
    )?;
    let c = built.constants(GradOracleMode::FullGradient)?;
    let eta = rng.random_range(0.2..1.8) * theory::gamma_minimizing_eta(c.mu, c.l_const, 0.0)?;
    let realized_beta = (beta * users as f64).round() / users as f64;
    let k = min_k(theory::gamma(eta, c.mu, c.l_const, 0.0), realized_beta)?
        + rng.random_range(0..=2usize);
    Ok(ExperimentConfig {
        problem,
        beta,
        attack: random_attack(rng, p),
        schedule: ScheduleSpec {
            steps: StepsSpec::Constant(k),
            rate: RateSpec::Constant(eta),
        },
        rounds,
        seed: rng.random(),
        init: crate::config::InitSpec::Random { scale: 3.0 },
        ..Default::default()
    })
}

/// Absolute slack allowed between a measured gap and its envelope.
pub const ENVELOPE_SLACK: f64 = 1e-9;

fn envelope_holds(exp: &Experiment, use_general: bool) -> Result<std::result::Result<(), String>> {
    for r in exp.run()? {
        let bound = if use_general {
            r.theorem2_bound
        } else {
            r.theorem1_bound
        };
        let Some(bound) = bound else {
            return Ok(Err(format!("round {}: bound unavailable", r.t)));
        };
        if r.optimality_gap > bound + ENVELOPE_SLACK {
            return Ok(Err(format!(
                "round {}: gap {} > bound {bound}",
                r.t, r.optimality_gap
            )));
        }
    }
    Ok(Ok(()))
}

pub fn theorem1_envelope_property(configs: usize) -> PropertyOutcome {
    let mut rng = suite_rng(31);
    let mut failure = None;
    for i in 0..configs {
        let outcome = random_contractive_config(&mut rng, 40)
            .and_then(|cfg| Experiment::new(&cfg).map(|e| (cfg, e)))
            .and_then(|(cfg, exp)| envelope_holds(&exp, false).map(|r| (cfg, r)));
        match outcome {
            Ok((_, Ok(()))) => {}
            Ok((cfg, Err(msg))) => {
                failure = Some(format!("config {i}: {msg}; config = {}", cfg.to_json()));
                break;
            }
            Err(e) => {
                failure = Some(format!("config {i}: {e}"));
                break;
            }
        }
    }
    PropertyOutcome::new(
        "uniform-schedule envelope",
        configs,
        failure,
        format!("{configs} random contractive configs, 40 rounds each"),
    )
}

pub fn theorem2_envelope_property(configs: usize) -> PropertyOutcome {
    let mut rng = suite_rng(32);
    let mut failure = None;
    for i in 0..configs {
        let outcome = random_contractive_config(&mut rng, 40).and_then(|mut cfg| {
            let StepsSpec::Constant(k) = cfg.schedule.steps else {
                unreachable!()
            };
            cfg.schedule = ScheduleSpec {
                steps: StepsSpec::Cycle(vec![k, 2 * k]),
                rate: RateSpec::PerClientRandom { lo: 0.5, hi: 1.0 },
            };
            let exp = Experiment::new(&cfg)?;
            envelope_holds(&exp, true).map(|r| (cfg, r))
        });
        match outcome {
            Ok((_, Ok(()))) => {}
            Ok((cfg, Err(msg))) => {
                failure = Some(format!("config {i}: {msg}; config = {}", cfg.to_json()));
                break;
            }
            Err(e) => {
                failure = Some(format!("config {i}: {e}"));
                break;
            }
        }
    }
    PropertyOutcome::new(
        "general-schedule envelope",
        configs,
        failure,
        format!("{configs} random configs with per-client rates"),
    )
}

pub fn bound_agreement_property(configs: usize) -> PropertyOutcome {
    let mut rng = suite_rng(33);
    let mut failure = None;
    let mut worst = 0.0f64;
    'outer: for i in 0..configs {
        let exp = match random_contractive_config(&mut rng, 100).and_then(|c| Experiment::new(&c)) {
            Ok(e) => e,
            Err(e) => {
                failure = Some(format!("config {i}: {e}"));
                break;
            }
        };
        for t in 0..=100 {
            match (exp.theorem1_bound(t), exp.theorem2_bound(t)) {
                (Some(a), Some((b, _))) => {
                    let rel = (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
                    worst = worst.max(rel);
                    if rel > 1e-12 {
                        failure = Some(format!("config {i}, t = {t}: {a} vs {b}"));
                        break 'outer;
                    }
                }
                other => {
                    failure = Some(format!("config {i}, t = {t}: bounds {other:?}"));
                    break 'outer;
                }
            }
        }
    }
    PropertyOutcome::new(
        "uniform schedule: general bound equals uniform bound",
        configs,
        failure,
        format!("{configs} configs, t <= 100, worst relative difference {worst:.3e}"),
    )
}

pub fn bounds_suite() -> Vec<PropertyOutcome> {
    vec![
        min_k_property(1_000),
        theorem1_envelope_property(20),
        theorem2_envelope_property(10),
        bound_agreement_property(10),
    ]
}
