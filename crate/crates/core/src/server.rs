//! Round orchestration: broadcast `w^t`, collect uploads, aggregate, record.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregateResult;
use crate::clients::{
    byzantine_message, honest_local_update, standard_roster, validate_roster, AttackContext,
    Behavior, ClientSpec, Schedule,
};
use crate::config::{resolve_schedule, schedule_to_spec, ExperimentConfig, InitSpec};
use crate::error::{Error, Result};
use crate::problems::{make_synthetic, Dataset, Optimum, Problem, SmoothnessConstants};
use crate::rng::{Purpose, RngContract};
use crate::theory::{self, BoundSeries, Theorem2Inputs, TheoryParams};
use crate::vector::ParamVector;

/// Measurements for round `t`, taken at the aggregate `w^{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub global_loss: f64,
    /// `F(w^{t+1}) - F(w*)`
    pub optimality_gap: f64,
    /// `||w^{t+1} - w*||^2`
    pub dist_to_opt_sq: f64,
    /// Uniform-schedule envelope; absent for non-uniform schedules or when the
    /// theory preconditions fail.
    pub theorem1_bound: Option<f64>,
    pub theorem2_bound: Option<f64>,
    /// Some per-step factor of the general bound was <= 0 up to this round.
    pub nonpositive_gamma: bool,
    pub aggregator_iterations: usize,
    pub aggregator_residual: f64,
    pub aggregator_converged: bool,
    pub wall_time_ms: Option<f64>,
    /// Held-out accuracy (logistic problems only).
    pub test_accuracy: Option<f64>,
    /// The gradient oracle does not satisfy the relative-variance bound.
    pub assumption_violating: bool,
}

/// A fully assembled experiment: problem, roster, schedule, and precomputed
/// theory envelopes.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    problem: Problem,
    clients: Vec<ClientSpec>,
    schedule: Schedule,
    constants: SmoothnessConstants,
    optimum: Optimum,
    w1: ParamVector,
    rng: RngContract,
    theorem1: Option<Vec<f64>>,
    theorem2: Option<Vec<(f64, bool)>>,
    warnings: Vec<String>,
}

pub fn build_problem(config: &ExperimentConfig) -> Result<Problem> {
    let pc = &config.problem;
    if pc.csv_files.is_empty() {
        make_synthetic(
            pc.dim,
            pc.users,
            pc.samples_per_user,
            pc.data_seed,
            pc.heterogeneity,
            pc.loss,
        )
    } else {
        let sets = pc
            .csv_files
            .iter()
            .map(Dataset::from_csv)
            .collect::<Result<Vec<_>>>()?;
        Problem::new(sets, pc.loss)
    }
}

fn initial_point(init: InitSpec, p: usize, rng: &RngContract) -> ParamVector {
    match init {
        InitSpec::Zero => ParamVector::zeros(p),
        InitSpec::Random { scale } => {
            let mut s = rng.stream_for(Purpose::Init, 0, 0, 0);
            ParamVector::new(
                (0..p)
                    .map(|_| {
                        scale
                            * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut s)
                    })
                    .collect(),
            )
        }
    }
}

impl Experiment {
    /// Builds the problem and the standard roster (last `B` clients
    /// Byzantine) from the config.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let problem = build_problem(config)?;
        let clients = standard_roster(problem.num_users(), config.num_byzantine(), &config.attack);
        Self::assemble(config, problem, clients)
    }

    /// Uses a caller-provided problem and roster. `config.problem`,
    /// `config.beta` and `config.attack` are ignored in favor of them.
    pub fn assemble(
        config: &ExperimentConfig,
        problem: Problem,
        clients: Vec<ClientSpec>,
    ) -> Result<Self> {
        if config.rounds == 0 {
            return Err(Error::config("rounds must be >= 1"));
        }
        config.aggregator.validate()?;
        validate_roster(&clients, config.override_halfplus)?;
        let m = clients.len();
        if m != problem.num_users() {
            return Err(Error::config(format!(
                "{m} clients for a problem with {} users",
                problem.num_users()
            )));
        }
        problem.validate_mode(config.oracle)?;
        for c in &clients {
            if let Behavior::Byzantine(a) = &c.behavior {
                a.validate(problem.dim())?;
            }
        }
        let b = clients.iter().filter(|c| !c.is_honest()).count();
        let beta = b as f64 / m as f64;

        let rng = RngContract::new(config.seed);
        let constants = problem.constants(config.oracle)?;
        let schedule = resolve_schedule(&config.schedule, &constants, beta, m, &rng)?;
        let optimum = problem.optimum()?;
        let w1 = initial_point(config.init, problem.dim(), &rng);

        let mut warnings = Vec::new();
        if problem.has_unequal_sizes() {
            warnings.push(
                "users hold different sample counts: the unweighted geometric median need not have w* as its fixed point"
                    .to_string(),
            );
        }
        if config.oracle.assumption_violating() {
            warnings.push(
                "minibatch gradients violate the relative-variance bound near w*; theory bounds are not reported"
                    .to_string(),
            );
        }

        let mut resolved = config.clone();
        resolved.schedule = schedule_to_spec(&schedule);
        resolved.beta = beta;
        resolved.validate_resolved_users(m);

        let mut exp = Experiment {
            config: resolved,
            problem,
            clients,
            schedule,
            constants,
            optimum,
            w1,
            rng,
            theorem1: None,
            theorem2: None,
            warnings,
        };
        exp.precompute_bounds();
        Ok(exp)
    }

    fn theory_applicable(&self) -> bool {
        let c = &self.constants;
        c.delta.is_finite()
            && c.mu > 0.0
            && c.mu <= c.l_const
            && theory::c_beta(self.beta()).is_ok()
    }

    fn precompute_bounds(&mut self) {
        if !self.theory_applicable() {
            return;
        }
        let t_max = self.config.rounds;
        let gap = self.w1.dist_sq(&self.optimum.w_star);
        if let Some((k, eta)) = self.schedule.as_uniform() {
            if let Some(params) = self.theory_params_for(k, eta, gap) {
                self.theorem1 = BoundSeries::new(&params, t_max).ok().map(|s| s.values);
            }
        }
        let honest = self.honest_ids();
        let inputs = Theorem2Inputs {
            schedule: &self.schedule,
            honest: &honest,
            mu: self.constants.mu,
            l_const: self.constants.l_const,
            delta: self.constants.delta,
            m: self.clients.len(),
            b: self.num_byzantine(),
            l_prefactor: self.constants.l_const,
            w1_gap_sq: gap,
        };
        let mut series = Vec::with_capacity(t_max + 1);
        let mut value = 0.5 * self.constants.l_const * gap;
        let mut flagged = false;
        series.push((value, flagged));
        for i in 1..=t_max {
            match theory::round_factor(i, &inputs) {
                Ok(f) => {
                    value *= f.multiplier;
                    flagged |= f.nonpositive_gamma;
                    series.push((value, flagged));
                }
                Err(_) => return,
            }
        }
        self.theorem2 = Some(series);
    }

    fn theory_params_for(&self, k: usize, eta: f64, gap: f64) -> Option<TheoryParams> {
        let params = TheoryParams {
            eta,
            mu: self.constants.mu,
            l_const: self.constants.l_const,
            delta: self.constants.delta,
            m: self.clients.len(),
            b: self.num_byzantine(),
            k,
            w1_gap_sq: gap,
        };
        params.validate().ok().map(|_| params)
    }

    /// Uniform-schedule theory parameters, when they apply.
    pub fn theory_params(&self) -> Option<TheoryParams> {
        if !self.theory_applicable() {
            return None;
        }
        let (k, eta) = self.schedule.as_uniform()?;
        self.theory_params_for(k, eta, self.w1.dist_sq(&self.optimum.w_star))
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn clients(&self) -> &[ClientSpec] {
        &self.clients
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn constants(&self) -> SmoothnessConstants {
        self.constants
    }

    pub fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    pub fn initial_point(&self) -> &ParamVector {
        &self.w1
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn num_byzantine(&self) -> usize {
        self.clients.iter().filter(|c| !c.is_honest()).count()
    }

    pub fn beta(&self) -> f64 {
        self.num_byzantine() as f64 / self.clients.len() as f64
    }

    pub fn honest_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .clients
            .iter()
            .filter(|c| c.is_honest())
            .map(|c| c.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn theorem1_bound(&self, t: usize) -> Option<f64> {
        match &self.theorem1 {
            Some(v) if t < v.len() => Some(v[t]),
            Some(_) => self
                .theory_params()
                .and_then(|p| theory::theorem1_bound(t, &p).ok()),
            None => None,
        }
    }

    /// General-schedule bound and its nonpositive-factor flag.
    pub fn theorem2_bound(&self, t: usize) -> Option<(f64, bool)> {
        match &self.theorem2 {
            Some(v) if t < v.len() => Some(v[t]),
            Some(_) => {
                let honest = self.honest_ids();
                let inputs = Theorem2Inputs {
                    schedule: &self.schedule,
                    honest: &honest,
                    mu: self.constants.mu,
                    l_const: self.constants.l_const,
                    delta: self.constants.delta,
                    m: self.clients.len(),
                    b: self.num_byzantine(),
                    l_prefactor: self.constants.l_const,
                    w1_gap_sq: self.w1.dist_sq(&self.optimum.w_star),
                };
                theory::theorem2_bound(t, &inputs)
                    .ok()
                    .map(|b| (b.value, b.nonpositive_gamma))
            }
            None => None,
        }
    }

    fn upload(&self, client: &ClientSpec, w_t: &ParamVector, t: usize) -> Result<ParamVector> {
        match &client.behavior {
            Behavior::Honest => honest_local_update(
                &self.problem,
                client.id,
                w_t,
                t,
                &self.schedule,
                self.config.oracle,
                &self.rng,
            ),
            Behavior::Byzantine(attack) => {
                let mut stream =
                    self.rng
                        .stream_for(Purpose::Attack, t as u64, client.id as u32, 0);
                byzantine_message(
                    attack,
                    AttackContext {
                        w_t,
                        honest_center: w_t,
                        p: self.problem.dim(),
                    },
                    &mut stream,
                )
            }
        }
    }

    /// All `M` uploads for round `t`, ordered by client id.
    pub fn collect_uploads(
        &self,
        w_t: &ParamVector,
        t: usize,
        parallel: bool,
    ) -> Result<Vec<ParamVector>> {
        let mut uploads: Vec<(usize, ParamVector)> = if parallel {
            self.clients
                .par_iter()
                .map(|c| self.upload(c, w_t, t).map(|z| (c.id, z)))
                .collect::<Result<_>>()?
        } else {
            self.clients
                .iter()
                .map(|c| self.upload(c, w_t, t).map(|z| (c.id, z)))
                .collect::<Result<_>>()?
        };
        uploads.sort_by_key(|(id, _)| *id);
        Ok(uploads.into_iter().map(|(_, z)| z).collect())
    }

    /// One protocol round from `w^t`; returns `w^{t+1}` and its trace record.
    pub fn run_round(&self, w_t: &ParamVector, t: usize) -> Result<(ParamVector, TraceRecord)> {
        self.run_round_with(w_t, t, self.config.parallel)
    }

    pub fn run_round_with(
        &self,
        w_t: &ParamVector,
        t: usize,
        parallel: bool,
    ) -> Result<(ParamVector, TraceRecord)> {
        let start = Instant::now();
        let uploads = self.collect_uploads(w_t, t, parallel)?;
        let agg: AggregateResult = self.config.aggregator.aggregate(&uploads)?;
        let w_next = agg.value;
        let loss = self.problem.global_loss(&w_next)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let (theorem2_bound, nonpositive_gamma) = match self.theorem2_bound(t) {
            Some((v, flag)) => (Some(v), flag),
            None => (None, false),
        };
        let record = TraceRecord {
            t,
            global_loss: loss,
            optimality_gap: loss - self.optimum.f_star,
            dist_to_opt_sq: w_next.dist_sq(&self.optimum.w_star),
            theorem1_bound: self.theorem1_bound(t),
            theorem2_bound,
            nonpositive_gamma,
            aggregator_iterations: agg.iterations,
            aggregator_residual: agg.residual,
            aggregator_converged: agg.converged,
            wall_time_ms: self.config.record_timing.then_some(elapsed),
            test_accuracy: self.problem.test_accuracy(&w_next),
            assumption_violating: self.config.oracle.assumption_violating(),
        };
        Ok((w_next, record))
    }

    /// Runs rounds `1..=T` from `w^1`.
    pub fn run(&self) -> Result<Vec<TraceRecord>> {
        self.run_with(self.config.parallel)
    }

    pub fn run_with(&self, parallel: bool) -> Result<Vec<TraceRecord>> {
        let mut w = self.w1.clone();
        let mut trace = Vec::with_capacity(self.config.rounds);
        for t in 1..=self.config.rounds {
            let (next, record) = self.run_round_with(&w, t, parallel)?;
            w = next;
            trace.push(record);
        }
        Ok(trace)
    }
}

impl ExperimentConfig {
    fn validate_resolved_users(&mut self, m: usize) {
        if self.problem.csv_files.is_empty() {
            self.problem.users = m;
        }
    }
}

/// Validates, assembles and runs a config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TraceRecord>> {
    Experiment::new(config)?.run()
}

/// Rounds until the gap first drops to `threshold`, if it ever does.
pub fn rounds_to_gap(trace: &[TraceRecord], threshold: f64) -> Option<usize> {
    trace
        .iter()
        .find(|r| r.optimality_gap <= threshold)
        .map(|r| r.t)
}
