//! Client behavior: honest multi-step local SGD and Byzantine uploads.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{GradOracleMode, Problem};
use crate::rng::{Purpose, RngContract};
use crate::vector::ParamVector;

/// Number of local steps `K^t` as a function of the round `t >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant(usize),
    /// `K^t = values[(t - 1) % len]`.
    Cycle(Vec<usize>),
    /// `K^t = K1 (1 - floor(t / E))`, clamped at zero. This is the literal
    /// decay formula: constant `K1` for `t < E`, zero from `t = E` on.
    FloorDecay {
        k1: usize,
        horizon: usize,
    },
    /// `K^t = max(1, round(K1 (1 - t / E)))`.
    LinearDecay {
        k1: usize,
        horizon: usize,
    },
}

impl StepSchedule {
    pub fn steps(&self, t: usize) -> usize {
        match self {
            StepSchedule::Constant(k) => *k,
            StepSchedule::Cycle(values) => values[(t.max(1) - 1) % values.len()],
            StepSchedule::FloorDecay { k1, horizon } => {
                if t / horizon >= 1 {
                    0
                } else {
                    *k1
                }
            }
            StepSchedule::LinearDecay { k1, horizon } => {
                let k = *k1 as f64 * (1.0 - t as f64 / *horizon as f64);
                (k.round() as i64).max(1) as usize
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            StepSchedule::Cycle(values) if values.is_empty() => Err(Error::invalid(
                "cycle step schedule needs at least one value",
            )),
            StepSchedule::FloorDecay { horizon, .. }
            | StepSchedule::LinearDecay { horizon, .. }
                if *horizon == 0 =>
            {
                Err(Error::invalid("decay horizon must be >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Learning rate `eta_m^{t,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSchedule {
    Constant(f64),
    /// One constant rate per client id.
    PerClient(Vec<f64>),
    /// `eta0 / (1 + decay (t - 1))`, shared by all clients and steps.
    InverseTime {
        eta0: f64,
        decay: f64,
    },
}

impl RateSchedule {
    pub fn rate(&self, t: usize, m: usize, _k: usize) -> f64 {
        match self {
            RateSchedule::Constant(eta) => *eta,
            RateSchedule::PerClient(rates) => rates[m],
            RateSchedule::InverseTime { eta0, decay } => {
                eta0 / (1.0 + decay * (t.max(1) - 1) as f64)
            }
        }
    }

    fn validate(&self, clients: usize) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        match self {
            RateSchedule::Constant(eta) if !positive(*eta) => Err(Error::invalid(format!(
                "learning rate must be > 0, got {eta}"
            ))),
            RateSchedule::PerClient(rates) => {
                if rates.len() != clients {
                    return Err(Error::invalid(format!(
                        "per-client rates list has {} entries for {clients} clients",
                        rates.len()
                    )));
                }
                match rates.iter().find(|r| !positive(**r)) {
                    Some(r) => Err(Error::invalid(format!(
                        "learning rate must be > 0, got {r}"
                    ))),
                    None => Ok(()),
                }
            }
            RateSchedule::InverseTime { eta0, decay } if !positive(*eta0) || !(*decay >= 0.0) => {
                Err(Error::invalid(
                    "inverse-time rate needs eta0 > 0 and decay >= 0",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Local training schedule: `K^t` and `eta_m^{t,k}`.
pub trait LocalSchedule {
    fn steps(&self, t: usize) -> usize;
    fn rate(&self, t: usize, m: usize, k: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub steps: StepSchedule,
    pub rate: RateSchedule,
}

impl Schedule {
    pub fn uniform(k: usize, eta: f64) -> Self {
        Schedule {
            steps: StepSchedule::Constant(k),
            rate: RateSchedule::Constant(eta),
        }
    }

    /// `(K, eta)` when both are constant in every argument.
    pub fn as_uniform(&self) -> Option<(usize, f64)> {
        match (&self.steps, &self.rate) {
            (StepSchedule::Constant(k), RateSchedule::Constant(eta)) => Some((*k, *eta)),
            _ => None,
        }
    }

    pub fn validate(&self, clients: usize) -> Result<()> {
        self.steps.validate()?;
        self.rate.validate(clients)
    }
}

impl LocalSchedule for Schedule {
    fn steps(&self, t: usize) -> usize {
        self.steps.steps(t)
    }

    fn rate(&self, t: usize, m: usize, k: usize) -> f64 {
        self.rate.rate(t, m, k)
    }
}

/// One recorded local SGD step.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStep {
    pub eta: f64,
    pub gradient: ParamVector,
}

/// Runs `K^t` local SGD steps from `w_t` and returns the upload
/// `z_m^t = w_m^{t, K^t}`.
pub fn honest_local_update(
    problem: &Problem,
    m: usize,
    w_t: &ParamVector,
    t: usize,
    schedule: &dyn LocalSchedule,
    mode: GradOracleMode,
    rng: &RngContract,
) -> Result<ParamVector> {
    local_sgd(problem, m, w_t, t, schedule, mode, rng, None)
}

/// Like [`honest_local_update`], also returning every `(eta, gradient)` pair.
pub fn honest_local_update_recorded(
    problem: &Problem,
    m: usize,
    w_t: &ParamVector,
    t: usize,
    schedule: &dyn LocalSchedule,
    mode: GradOracleMode,
    rng: &RngContract,
) -> Result<(ParamVector, Vec<LocalStep>)> {
    let mut log = Vec::new();
    let z = local_sgd(problem, m, w_t, t, schedule, mode, rng, Some(&mut log))?;
    Ok((z, log))
}

#[allow(clippy::too_many_arguments)]
fn local_sgd(
    problem: &Problem,
    m: usize,
    w_t: &ParamVector,
    t: usize,
    schedule: &dyn LocalSchedule,
    mode: GradOracleMode,
    rng: &RngContract,
    mut log: Option<&mut Vec<LocalStep>>,
) -> Result<ParamVector> {
    w_t.check_dim(problem.dim())?;
    let purpose = match mode {
        GradOracleMode::Minibatch { .. } => Purpose::Minibatch,
        _ => Purpose::GradientNoise,
    };
    let mut w = w_t.clone();
    for k in 1..=schedule.steps(t) {
        let eta = schedule.rate(t, m, k);
        let mut stream = rng.stream_for(purpose, t as u64, m as u32, k as u64);
        let g = problem.local_stoch_grad(m, &w, mode, &mut stream)?;
        w.axpy(-eta, &g);
        if let Some(log) = log.as_deref_mut() {
            log.push(LocalStep { eta, gradient: g });
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    #[default]
    Zero,
    /// Centered on the server's current estimate `w^t`.
    HonestCenter,
}

fn default_sigma() -> f64 {
    10.0
}

/// What a Byzantine client uploads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    Gaussian {
        #[serde(default)]
        mean: MeanMode,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// `-scale * w^t`
    SignFlip {
        scale: f64,
    },
    ZeroVector,
    FixedVector {
        v: ParamVector,
    },
}

impl Default for AttackKind {
    fn default() -> Self {
        AttackKind::Gaussian {
            mean: MeanMode::Zero,
            sigma: default_sigma(),
        }
    }
}

impl AttackKind {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            AttackKind::Gaussian { sigma, .. } if !(*sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::invalid(format!("attack sigma must be >= 0, got {sigma}")),
            ),
            AttackKind::SignFlip { scale } if !scale.is_finite() => {
                Err(Error::invalid("sign-flip scale must be finite"))
            }
            AttackKind::FixedVector { v } => {
                v.check_dim(p)?;
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("fixed attack vector must be finite"))
                }
            }
            _ => Ok(()),
        }
    }
}

/// Information available to an attacker in round `t`.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub w_t: &'a ParamVector,
    pub honest_center: &'a ParamVector,
    pub p: usize,
}

pub fn byzantine_message<R: Rng + ?Sized>(
    attack: &AttackKind,
    ctx: AttackContext<'_>,
    rng: &mut R,
) -> Result<ParamVector> {
    ctx.w_t.check_dim(ctx.p)?;
    ctx.honest_center.check_dim(ctx.p)?;
    attack.validate(ctx.p)?;
    Ok(match attack {
        AttackKind::ZeroVector => ParamVector::zeros(ctx.p),
        AttackKind::FixedVector { v } => v.clone(),
        AttackKind::SignFlip { scale } => ctx.w_t.scale(-scale),
        AttackKind::Gaussian { mean, sigma } => {
            let noise = Normal::new(0.0, *sigma)
                .map_err(|e| Error::invalid(format!("gaussian attack: {e}")))?;
            let mut v = match mean {
                MeanMode::Zero => ParamVector::zeros(ctx.p),
                MeanMode::HonestCenter => ctx.honest_center.clone(),
            };
            for x in v.as_mut_slice() {
                *x += noise.sample(rng);
            }
            v
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Honest,
    Byzantine(AttackKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub id: usize,
    pub behavior: Behavior,
}

impl ClientSpec {
    pub fn honest(id: usize) -> Self {
        ClientSpec {
            id,
            behavior: Behavior::Honest,
        }
    }

    pub fn byzantine(id: usize, attack: AttackKind) -> Self {
        ClientSpec {
            id,
            behavior: Behavior::Byzantine(attack),
        }
    }

    pub fn is_honest(&self) -> bool {
        matches!(self.behavior, Behavior::Honest)
    }
}

/// `M` clients where the last `b` are Byzantine with the given attack.
pub fn standard_roster(m: usize, b: usize, attack: &AttackKind) -> Vec<ClientSpec> {
    (0..m)
        .map(|id| {
            if id >= m - b.min(m) {
                ClientSpec::byzantine(id, attack.clone())
            } else {
                ClientSpec::honest(id)
            }
        })
        .collect()
}

/// Rejects rosters with `B >= M/2` unless explicitly overridden.
pub fn validate_roster(clients: &[ClientSpec], allow_half_or_more: bool) -> Result<()> {
    let m = clients.len();
    if m == 0 {
        return Err(Error::config("at least one client is required"));
    }
    let mut seen = vec![false; m];
    for c in clients {
        if c.id >= m || std::mem::replace(&mut seen[c.id], true) {
            return Err(Error::config(format!(
                "client ids must be a permutation of 0..{m}; bad id {}",
                c.id
            )));
        }
    }
    let b = clients.iter().filter(|c| !c.is_honest()).count();
    if 2 * b >= m && !allow_half_or_more {
        return Err(Error::config(format!(
            "B = {b} Byzantine clients out of M = {m} violates B < M/2; set override_halfplus to run anyway"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Dataset, LossKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half_square() -> Problem {
        // F(w) = w^2 / 2 from one sample x = 1, y = 0.
        Problem::new(
            vec![Dataset::new(vec![vec![1.0]], vec![0.0]).unwrap()],
            LossKind::Ridge { lambda: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn zero_steps_is_identity() {
        let pr = half_square();
        let w = ParamVector::new(vec![8.0]);
        let z = honest_local_update(
            &pr,
            0,
            &w,
            1,
            &Schedule::uniform(0, 0.5),
            GradOracleMode::FullGradient,
            &RngContract::new(0),
        )
        .unwrap();
        assert_eq!(z, w);
    }

    #[test]
    fn three_halving_steps() {
        let pr = half_square();
        let z = honest_local_update(
            &pr,
            0,
            &ParamVector::new(vec![8.0]),
            1,
            &Schedule::uniform(3, 0.5),
            GradOracleMode::FullGradient,
            &RngContract::new(0),
        )
        .unwrap();
        assert_eq!(z, ParamVector::new(vec![1.0]));
    }

    #[test]
    fn step_schedules() {
        assert_eq!(StepSchedule::Cycle(vec![4, 8]).steps(1), 4);
        assert_eq!(StepSchedule::Cycle(vec![4, 8]).steps(2), 8);
        assert_eq!(StepSchedule::Cycle(vec![4, 8]).steps(3), 4);
        let floor = StepSchedule::FloorDecay { k1: 8, horizon: 10 };
        assert_eq!(floor.steps(1), 8);
        assert_eq!(floor.steps(9), 8);
        assert_eq!(floor.steps(10), 0);
        assert_eq!(floor.steps(25), 0);
        let lin = StepSchedule::LinearDecay { k1: 8, horizon: 10 };
        assert_eq!(lin.steps(1), 7);
        assert_eq!(lin.steps(5), 4);
        assert_eq!(lin.steps(10), 1);
    }

    #[test]
    fn rate_validation() {
        assert!(Schedule::uniform(1, 0.0).validate(3).is_err());
        let s = Schedule {
            steps: StepSchedule::Constant(1),
            rate: RateSchedule::PerClient(vec![0.1, 0.2]),
        };
        assert!(s.validate(3).is_err());
        assert!(s.validate(2).is_ok());
        assert_eq!(s.rate.rate(4, 1, 2), 0.2);
    }

    #[test]
    fn simple_attacks() {
        let w = ParamVector::new(vec![1.0, -2.0, 3.0]);
        let ctx = AttackContext {
            w_t: &w,
            honest_center: &w,
            p: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            byzantine_message(&AttackKind::ZeroVector, ctx, &mut rng).unwrap(),
            ParamVector::zeros(3)
        );
        assert_eq!(
            byzantine_message(&AttackKind::SignFlip { scale: 2.0 }, ctx, &mut rng).unwrap(),
            ParamVector::new(vec![-2.0, 4.0, -6.0])
        );
        let ctx2 = AttackContext {
            w_t: &ParamVector::zeros(2),
            honest_center: &ParamVector::zeros(2),
            p: 2,
        };
        let v = ParamVector::new(vec![7.0, -7.0]);
        assert_eq!(
            byzantine_message(&AttackKind::FixedVector { v: v.clone() }, ctx2, &mut rng).unwrap(),
            v
        );
        assert!(byzantine_message(&AttackKind::FixedVector { v }, ctx, &mut rng).is_err());
    }

    #[test]
    fn roster_limits() {
        let attack = AttackKind::ZeroVector;
        let r = standard_roster(5, 2, &attack);
        assert_eq!(r.iter().filter(|c| !c.is_honest()).count(), 2);
        assert!(!r[4].is_honest() && r[0].is_honest());
        assert!(validate_roster(&r, false).is_ok());
        let r = standard_roster(4, 2, &attack);
        assert!(validate_roster(&r, false).is_err());
        assert!(validate_roster(&r, true).is_ok());
        let dup = vec![ClientSpec::honest(0), ClientSpec::honest(0)];
        assert!(validate_roster(&dup, false).is_err());
    }

    #[test]
    fn attack_serde_defaults() {
        let a: AttackKind = serde_json::from_str(r#"{"gaussian":{}}"#).unwrap();
        assert_eq!(a, AttackKind::default());
        assert!(
            serde_json::from_str::<AttackKind>(r#"{"gaussian":{"sigma":1,"bogus":2}}"#).is_err()
        );
    }
}
