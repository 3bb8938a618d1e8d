//! Experiment configuration (JSON) and its resolution into concrete values.
//!
//! A config may leave the learning rate and the step count symbolic
//! (`"optimal"`, `"min_k"`, `{"per_client_random": ..}`). Resolution replaces
//! them with numbers computed from the problem's curvature constants, so the
//! resolved config alone reproduces a run exactly.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::Aggregator;
use crate::clients::{AttackKind, RateSchedule, Schedule, StepSchedule};
use crate::error::{Error, Result};
use crate::problems::{GradOracleMode, LossKind, SmoothnessConstants};
use crate::rng::{Purpose, RngContract};
use crate::theory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Parameter dimension `p`.
    pub dim: usize,
    /// Number of clients `M`.
    pub users: usize,
    pub samples_per_user: usize,
    /// 0 gives every user the identical dataset.
    pub heterogeneity: f64,
    pub loss: LossKind,
    /// Seed for synthetic data; independent of the run's master seed.
    pub data_seed: u64,
    /// One headerless CSV per user (features..., label). When non-empty,
    /// replaces the synthetic generator and fixes `users` to the file count.
    pub csv_files: Vec<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            dim: 10,
            users: 50,
            samples_per_user: 200,
            heterogeneity: 0.0,
            loss: LossKind::Ridge { lambda: 1.0 },
            data_seed: 0,
            csv_files: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsSpec {
    /// Smallest `K` with `gamma^K C_beta^2 < 1` (needs a constant rate).
    #[default]
    MinK,
    Constant(usize),
    Cycle(Vec<usize>),
    FloorDecay {
        k1: usize,
        horizon: usize,
    },
    LinearDecay {
        k1: usize,
        horizon: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    /// The gamma-minimizing rate `mu / (L^2 (1 + delta^2))`.
    #[default]
    Optimal,
    Constant(f64),
    PerClient(Vec<f64>),
    /// Per-client rates drawn uniformly from `[lo, hi]` times the optimal rate.
    PerClientRandom {
        lo: f64,
        hi: f64,
    },
    InverseTime {
        eta0: f64,
        decay: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: StepsSpec,
    pub rate: RateSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Zero,
    /// Standard normal coordinates times `scale`, from the run's seed.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Byzantine fraction; `B = round(beta * M)`.
    pub beta: f64,
    pub attack: AttackKind,
    pub aggregator: Aggregator,
    pub schedule: ScheduleSpec,
    pub oracle: GradOracleMode,
    /// Number of rounds `T`.
    pub rounds: usize,
    /// Master seed for every random draw of the run.
    pub seed: u64,
    pub init: InitSpec,
    /// Allow `B >= M/2` (for demonstrating failure).
    pub override_halfplus: bool,
    /// Evaluate clients on the rayon pool. Results do not depend on it.
    pub parallel: bool,
    /// Record per-round wall time. Makes traces non-reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemConfig::default(),
            beta: 0.2,
            attack: AttackKind::default(),
            aggregator: Aggregator::default(),
            schedule: ScheduleSpec::default(),
            oracle: GradOracleMode::FullGradient,
            rounds: 200,
            seed: 0,
            init: InitSpec::Zero,
            override_halfplus: false,
            parallel: true,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn num_users(&self) -> usize {
        if self.problem.csv_files.is_empty() {
            self.problem.users
        } else {
            self.problem.csv_files.len()
        }
    }

    /// `B = round(beta * M)`.
    pub fn num_byzantine(&self) -> usize {
        (self.beta * self.num_users() as f64).round() as usize
    }

    /// Checks everything that does not need the problem data.
    pub fn validate(&self) -> Result<()> {
        let m = self.num_users();
        if m == 0 {
            return Err(Error::config("at least one user is required"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::config(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        let b = self.num_byzantine();
        if 2 * b >= m && !self.override_halfplus {
            return Err(Error::config(format!(
                "beta = {} gives B = {b} of M = {m}, violating B < M/2; set override_halfplus to run anyway",
                self.beta
            )));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be >= 1"));
        }
        if self.problem.csv_files.is_empty()
            && (self.problem.dim == 0 || self.problem.samples_per_user == 0)
        {
            return Err(Error::config("dim and samples_per_user must be >= 1"));
        }
        if let InitSpec::Random { scale } = self.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(Error::config("init scale must be finite and >= 0"));
            }
        }
        self.aggregator.validate().map_err(into_config)?;
        Ok(())
    }
}

fn into_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(msg) => Error::Config(msg),
        other => other,
    }
}

/// Replaces symbolic schedule entries with concrete values.
pub fn resolve_schedule(
    spec: &ScheduleSpec,
    consts: &SmoothnessConstants,
    beta: f64,
    clients: usize,
    rng: &RngContract,
) -> Result<Schedule> {
    let optimal = || {
        if !consts.delta.is_finite() {
            return Err(Error::config(
                "the optimal rate needs a finite relative-noise bound; give an explicit rate for minibatch oracles",
            ));
        }
        theory::gamma_minimizing_eta(consts.mu, consts.l_const, consts.delta).map_err(into_config)
    };
    let rate = match &spec.rate {
        RateSpec::Optimal => RateSchedule::Constant(optimal()?),
        RateSpec::Constant(eta) => RateSchedule::Constant(*eta),
        RateSpec::PerClient(rates) => RateSchedule::PerClient(rates.clone()),
        RateSpec::PerClientRandom { lo, hi } => {
            if !(0.0 < *lo && lo <= hi && hi.is_finite()) {
                return Err(Error::config("per_client_random needs 0 < lo <= hi"));
            }
            let eta = optimal()?;
            let mut stream = rng.stream_for(Purpose::Auxiliary, 0, 0, 0);
            RateSchedule::PerClient(
                (0..clients)
                    .map(|_| eta * stream.random_range(*lo..=*hi))
                    .collect(),
            )
        }
        RateSpec::InverseTime { eta0, decay } => RateSchedule::InverseTime {
            eta0: *eta0,
            decay: *decay,
        },
    };
    let steps = match &spec.steps {
        StepsSpec::MinK => {
            let RateSchedule::Constant(eta) = rate else {
                return Err(Error::config(
                    "steps \"min_k\" needs a constant learning rate",
                ));
            };
            if !consts.delta.is_finite() {
                return Err(Error::config(
                    "steps \"min_k\" needs a finite relative-noise bound",
                ));
            }
            let g = theory::gamma(eta, consts.mu, consts.l_const, consts.delta);
            StepSchedule::Constant(theory::min_k(g, beta).map_err(into_config)?)
        }
        StepsSpec::Constant(k) => StepSchedule::Constant(*k),
        StepsSpec::Cycle(v) => StepSchedule::Cycle(v.clone()),
        StepsSpec::FloorDecay { k1, horizon } => StepSchedule::FloorDecay {
            k1: *k1,
            horizon: *horizon,
        },
        StepsSpec::LinearDecay { k1, horizon } => StepSchedule::LinearDecay {
            k1: *k1,
            horizon: *horizon,
        },
    };
    let schedule = Schedule { steps, rate };
    schedule.validate(clients).map_err(into_config)?;
    Ok(schedule)
}

/// The spec form of an already concrete schedule.
pub fn schedule_to_spec(schedule: &Schedule) -> ScheduleSpec {
    let steps = match &schedule.steps {
        StepSchedule::Constant(k) => StepsSpec::Constant(*k),
        StepSchedule::Cycle(v) => StepsSpec::Cycle(v.clone()),
        StepSchedule::FloorDecay { k1, horizon } => StepsSpec::FloorDecay {
            k1: *k1,
            horizon: *horizon,
        },
        StepSchedule::LinearDecay { k1, horizon } => StepsSpec::LinearDecay {
            k1: *k1,
            horizon: *horizon,
        },
    };
    let rate = match &schedule.rate {
        RateSchedule::Constant(eta) => RateSpec::Constant(*eta),
        RateSchedule::PerClient(v) => RateSpec::PerClient(v.clone()),
        RateSchedule::InverseTime { eta0, decay } => RateSpec::InverseTime {
            eta0: *eta0,
            decay: *decay,
        },
    };
    ScheduleSpec { steps, rate }
}
