//! Convergence constants and optimality-gap envelopes.
//!
//! With per-step contraction `gamma = 1 - 2 eta mu + eta^2 L^2 (1 + delta^2)`
//! and robustness constant `C_beta = (2 - 2 beta) / (1 - 2 beta)`, the uniform
//! schedule (`K` steps of rate `eta`) gives
//!
//! ```text
//! F(w^{t+1}) - F* <= (L/2) (gamma^K)^t C_beta^{2t} ||w^1 - w*||^2
//! ```
//!
//! and general schedules replace each round's `C_beta^2 gamma^K` by
//! `C_beta^2 / (M - B) * sum_{m honest} prod_k gamma_m^{i,k}`.

use crate::aggregation::robustness_constant;
use crate::clients::LocalSchedule;
use crate::error::{Error, Result};

pub fn gamma(eta: f64, mu: f64, l_const: f64, delta: f64) -> f64 {
    1.0 - 2.0 * eta * mu + eta * eta * l_const * l_const * (1.0 + delta * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaClass {
    /// `gamma <= 0`; the squared-distance recurrence is degenerate.
    NonPositive,
    /// `0 < gamma < 1`.
    Contractive,
    /// `gamma >= 1`.
    NonContractive,
}

pub fn classify_gamma(g: f64) -> GammaClass {
    if g <= 0.0 {
        GammaClass::NonPositive
    } else if g < 1.0 {
        GammaClass::Contractive
    } else {
        GammaClass::NonContractive
    }
}

/// `(2 - 2 beta) / (1 - 2 beta)` for `0 <= beta < 1/2`.
pub fn c_beta(beta: f64) -> Result<f64> {
    robustness_constant(beta)
}

fn check_curvature(mu: f64, l_const: f64, delta: f64) -> Result<()> {
    if !(mu > 0.0 && l_const >= mu && l_const.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 < mu <= L, got mu = {mu}, L = {l_const}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    Ok(())
}

/// Upper end of the open rate interval `(0, eta_max)` on which `gamma < 1`.
pub fn stable_eta_max(mu: f64, l_const: f64, delta: f64) -> Result<f64> {
    check_curvature(mu, l_const, delta)?;
    Ok(2.0 * mu / (l_const * l_const * (1.0 + delta * delta)))
}

/// Rate minimizing `gamma`, the midpoint of the stable interval.
pub fn gamma_minimizing_eta(mu: f64, l_const: f64, delta: f64) -> Result<f64> {
    Ok(0.5 * stable_eta_max(mu, l_const, delta)?)
}

/// Smallest `K` with `gamma^K C_beta^2 < 1`.
pub fn min_k(gamma_val: f64, beta: f64) -> Result<usize> {
    let c = c_beta(beta)?;
    if gamma_val >= 1.0 || gamma_val.is_nan() {
        return Err(Error::invalid(format!(
            "gamma = {gamma_val} >= 1: no K yields contraction"
        )));
    }
    if gamma_val < 0.0 {
        return Err(Error::invalid(format!("gamma = {gamma_val} must be >= 0")));
    }
    if gamma_val == 0.0 {
        return Ok(1);
    }
    let c2 = c * c;
    let contracts = |k: usize| gamma_val.powf(k as f64) * c2 < 1.0;
    let threshold = -2.0 * c.ln() / gamma_val.ln();
    let mut k = (threshold.floor() as usize).saturating_add(1).max(1);
    while !contracts(k) {
        k += 1;
    }
    while k > 1 && contracts(k - 1) {
        k -= 1;
    }
    Ok(k)
}

/// Parameters of the uniform-schedule bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub eta: f64,
    pub mu: f64,
    pub l_const: f64,
    pub delta: f64,
    pub m: usize,
    pub b: usize,
    pub k: usize,
    /// `||w^1 - w*||^2`
    pub w1_gap_sq: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        check_curvature(self.mu, self.l_const, self.delta)?;
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be > 0"));
        }
        if self.k == 0 {
            return Err(Error::invalid("K must be >= 1"));
        }
        if !(self.w1_gap_sq >= 0.0) {
            return Err(Error::invalid("initial squared gap must be >= 0"));
        }
        c_beta(self.beta()).map(|_| ())
    }

    pub fn beta(&self) -> f64 {
        self.b as f64 / self.m as f64
    }

    pub fn gamma(&self) -> f64 {
        gamma(self.eta, self.mu, self.l_const, self.delta)
    }

    pub fn c_beta(&self) -> Result<f64> {
        c_beta(self.beta())
    }

    /// `gamma^K C_beta^2`
    pub fn contraction_factor(&self) -> Result<f64> {
        let c = self.c_beta()?;
        Ok(self.gamma().powi(self.k as i32) * c * c)
    }
}

/// `(L/2) (gamma^K)^t C_beta^{2t} ||w^1 - w*||^2`.
pub fn theorem1_bound(t: usize, params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    let factor = params.contraction_factor()?;
    Ok(0.5 * params.l_const * params.w1_gap_sq * factor.powi(t as i32))
}

/// Theorem-1 envelope for rounds `0..=t_max`, built by the exact recurrence
/// `bound_{t+1} = contraction_factor * bound_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSeries {
    pub values: Vec<f64>,
    pub contraction_factor: f64,
}

impl BoundSeries {
    pub fn new(params: &TheoryParams, t_max: usize) -> Result<Self> {
        let start = theorem1_bound(0, params)?;
        let factor = params.contraction_factor()?;
        let mut values = Vec::with_capacity(t_max + 1);
        let mut v = start;
        values.push(v);
        for _ in 0..t_max {
            v *= factor;
            values.push(v);
        }
        Ok(BoundSeries {
            values,
            contraction_factor: factor,
        })
    }
}

/// Inputs to the general-schedule bound.
#[derive(Clone, Copy)]
pub struct Theorem2Inputs<'a> {
    pub schedule: &'a dyn LocalSchedule,
    /// Ids of the honest clients.
    pub honest: &'a [usize],
    pub mu: f64,
    pub l_const: f64,
    pub delta: f64,
    pub m: usize,
    pub b: usize,
    /// Smoothness constant used in the `L/2` prefactor.
    pub l_prefactor: f64,
    pub w1_gap_sq: f64,
}

impl Theorem2Inputs<'_> {
    fn validate(&self) -> Result<f64> {
        check_curvature(self.mu, self.l_const, self.delta)?;
        if self.honest.len() != self.m - self.b.min(self.m) {
            return Err(Error::invalid(format!(
                "{} honest ids given for M - B = {}",
                self.honest.len(),
                self.m - self.b.min(self.m)
            )));
        }
        c_beta(self.b as f64 / self.m as f64)
    }

    fn step_gamma(&self, i: usize, m: usize, k: usize) -> f64 {
        gamma(
            self.schedule.rate(i, m, k),
            self.mu,
            self.l_const,
            self.delta,
        )
    }
}

/// One round's contribution to the general bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundFactor {
    /// `sum_{m honest} prod_{k <= K^i} gamma_m^{i,k}`
    pub honest_sum: f64,
    /// `C_beta^2 / (M - B) * honest_sum`
    pub multiplier: f64,
    /// Some `gamma_m^{i,k} <= 0` was encountered.
    pub nonpositive_gamma: bool,
}

pub fn round_factor(i: usize, inputs: &Theorem2Inputs<'_>) -> Result<RoundFactor> {
    let c = inputs.validate()?;
    let steps = inputs.schedule.steps(i);
    let mut nonpositive = false;
    let honest_sum: f64 = inputs
        .honest
        .iter()
        .map(|&m| {
            (1..=steps)
                .map(|k| {
                    let g = inputs.step_gamma(i, m, k);
                    nonpositive |= g <= 0.0;
                    g
                })
                .product::<f64>()
        })
        .sum();
    Ok(RoundFactor {
        honest_sum,
        multiplier: c * c / inputs.honest.len() as f64 * honest_sum,
        nonpositive_gamma: nonpositive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Bound {
    pub value: f64,
    /// Diagnostic: the recurrence assumes nonnegative per-step factors.
    pub nonpositive_gamma: bool,
}

/// `(L/2) ||w^1 - w*||^2 prod_{i=1}^t [C_beta^2/(M-B) sum_m prod_k gamma_m^{i,k}]`.
pub fn theorem2_bound(t: usize, inputs: &Theorem2Inputs<'_>) -> Result<Theorem2Bound> {
    inputs.validate()?;
    let mut value = 0.5 * inputs.l_prefactor * inputs.w1_gap_sq;
    let mut flagged = false;
    for i in 1..=t {
        let f = round_factor(i, inputs)?;
        value *= f.multiplier;
        flagged |= f.nonpositive_gamma;
    }
    Ok(Theorem2Bound {
        value,
        nonpositive_gamma: flagged,
    })
}

/// Whether round `i` satisfies `sum_m prod_k gamma_m^{i,k} < (M - B) / C_beta^2`.
pub fn zero_gap_condition(i: usize, inputs: &Theorem2Inputs<'_>) -> Result<bool> {
    let c = inputs.validate()?;
    let f = round_factor(i, inputs)?;
    Ok(f.honest_sum < inputs.honest.len() as f64 / (c * c))
}
