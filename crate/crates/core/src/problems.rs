//! Loss models with computable optimum and curvature constants.
//!
//! Every user `m` holds a dataset of `S_m` samples. The local loss is
//! `F_m(w) = (1/S_m) sum_s f(w, x_s, y_s) + (lambda/2) ||w||^2` and the global
//! loss weights users by `S_m / sum S`. Ridge uses `f = (x^T w - y)^2 / 2`,
//! logistic uses the cross-entropy with labels in `{0, 1}`.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{Purpose, RngContract};
use crate::vector::{dot, ParamVector};

/// Feature rows and labels for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                inputs.len(),
                targets.len()
            )));
        }
        let p = inputs[0].len();
        if p == 0 {
            return Err(Error::invalid("feature dimension must be >= 1"));
        }
        for row in &inputs {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
        }
        let finite = inputs
            .iter()
            .flatten()
            .chain(&targets)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset { inputs, targets })
    }

    /// Reads a headerless CSV whose last column is the label.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let values = record
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), line + 1)))?;
            let Some((label, features)) = values.split_last() else {
                continue;
            };
            inputs.push(features.to_vec());
            targets.push(*label);
        }
        Dataset::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    Ridge { lambda: f64 },
    Logistic { lambda: f64 },
}

impl LossKind {
    pub fn lambda(&self) -> f64 {
        match *self {
            LossKind::Ridge { lambda } | LossKind::Logistic { lambda } => lambda,
        }
    }
}

/// How a client obtains its stochastic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GradOracleMode {
    #[default]
    FullGradient,
    /// Uniform sample without replacement, fresh every step.
    Minibatch { batch_size: usize },
    /// Global gradient plus noise of norm exactly `delta * ||grad F(w)||`.
    RelativeNoise { delta: f64 },
}

impl GradOracleMode {
    /// Minibatch noise does not vanish at the optimum, so the relative
    /// variance bound fails there.
    pub fn assumption_violating(&self) -> bool {
        matches!(self, GradOracleMode::Minibatch { .. })
    }
}

/// Strong convexity `mu`, gradient Lipschitz constant `l_const`, and the
/// relative gradient-noise bound `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub mu: f64,
    pub l_const: f64,
    /// Infinite when the oracle has no finite relative-noise bound.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub w_star: ParamVector,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct UserData {
    data: Dataset,
    // X^T X / S, X^T y / S and y^T y / (2 S).
    gram: Matrix,
    xty: Vec<f64>,
    yty_half: f64,
}

impl UserData {
    fn new(data: Dataset) -> Self {
        let p = data.dim();
        let s = data.len() as f64;
        let mut gram = Matrix::zeros(p);
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        for (x, &y) in data.inputs.iter().zip(&data.targets) {
            gram.add_outer(1.0 / s, x);
            for (acc, xi) in xty.iter_mut().zip(x) {
                *acc += xi * y / s;
            }
            yty += y * y;
        }
        UserData {
            data,
            gram,
            xty,
            yty_half: yty / (2.0 * s),
        }
    }
}

/// A federated learning objective over `M` user datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    p: usize,
    users: Vec<UserData>,
    loss: LossKind,
    weights: Vec<f64>,
    homogeneous: bool,
    test_set: Option<Dataset>,
}

fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl Problem {
    pub fn new(per_user: Vec<Dataset>, loss: LossKind) -> Result<Self> {
        if per_user.is_empty() {
            return Err(Error::invalid("problem needs at least one user"));
        }
        let p = per_user[0].dim();
        for d in &per_user {
            if d.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: d.dim(),
                });
            }
        }
        match loss {
            LossKind::Ridge { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                return Err(Error::invalid(format!(
                    "ridge lambda must be >= 0, got {lambda}"
                )))
            }
            LossKind::Logistic { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                return Err(Error::invalid(format!(
                    "logistic lambda must be > 0 for strong convexity, got {lambda}"
                )))
            }
            LossKind::Logistic { .. }
                if per_user
                    .iter()
                    .flat_map(|d| &d.targets)
                    .any(|&y| y != 0.0 && y != 1.0) =>
            {
                return Err(Error::invalid("logistic labels must be 0 or 1"));
            }
            _ => {}
        }
        let total: usize = per_user.iter().map(Dataset::len).sum();
        let weights = per_user
            .iter()
            .map(|d| d.len() as f64 / total as f64)
            .collect();
        let homogeneous = per_user.iter().all(|d| d == &per_user[0]);
        Ok(Problem {
            p,
            users: per_user.into_iter().map(UserData::new).collect(),
            loss,
            weights,
            homogeneous,
            test_set: None,
        })
    }

    /// Attaches a held-out split used for test accuracy (logistic only).
    pub fn with_test_set(mut self, test: Dataset) -> Result<Self> {
        if test.dim() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: test.dim(),
            });
        }
        self.test_set = Some(test);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn user_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dataset(&self, m: usize) -> Result<&Dataset> {
        Ok(&self.user(m)?.data)
    }

    pub fn test_set(&self) -> Option<&Dataset> {
        self.test_set.as_ref()
    }

    /// All users hold the identical dataset, so `F_m == F` exactly.
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// True when the sample counts differ across users.
    pub fn has_unequal_sizes(&self) -> bool {
        let s0 = self.users[0].data.len();
        self.users.iter().any(|u| u.data.len() != s0)
    }

    fn user(&self, m: usize) -> Result<&UserData> {
        self.users.get(m).ok_or_else(|| {
            Error::invalid(format!(
                "user index {m} out of range (M = {})",
                self.users.len()
            ))
        })
    }

    fn sample_loss(&self, w: &[f64], x: &[f64], y: f64) -> f64 {
        let a = dot(x, w);
        match self.loss {
            LossKind::Ridge { .. } => 0.5 * (a - y) * (a - y),
            LossKind::Logistic { .. } => softplus(a) - y * a,
        }
    }

    /// Derivative of the per-sample loss with respect to `x^T w`.
    fn sample_slope(&self, w: &[f64], x: &[f64], y: f64) -> f64 {
        let a = dot(x, w);
        match self.loss {
            LossKind::Ridge { .. } => a - y,
            LossKind::Logistic { .. } => sigmoid(a) - y,
        }
    }

    fn user_loss(&self, u: &UserData, w: &ParamVector) -> f64 {
        let w = w.as_slice();
        let data_term = match self.loss {
            LossKind::Ridge { .. } => 0.5 * dot(w, &u.gram.matvec(w)) - dot(&u.xty, w) + u.yty_half,
            LossKind::Logistic { .. } => {
                u.data
                    .inputs
                    .iter()
                    .zip(&u.data.targets)
                    .map(|(x, &y)| self.sample_loss(w, x, y))
                    .sum::<f64>()
                    / u.data.len() as f64
            }
        };
        data_term + 0.5 * self.loss.lambda() * dot(w, w)
    }

    fn user_gradient(&self, u: &UserData, w: &ParamVector) -> ParamVector {
        let ws = w.as_slice();
        let mut g = match self.loss {
            LossKind::Ridge { .. } => {
                let mut g = u.gram.matvec(ws);
                for (gi, b) in g.iter_mut().zip(&u.xty) {
                    *gi -= b;
                }
                ParamVector::new(g)
            }
            LossKind::Logistic { .. } => self.batch_sum(u, ws, 0..u.data.len()),
        };
        g.axpy(self.loss.lambda(), w);
        g
    }

    /// Mean per-sample gradient over the given sample indices (no regularizer).
    fn batch_sum(
        &self,
        u: &UserData,
        w: &[f64],
        idx: impl ExactSizeIterator<Item = usize>,
    ) -> ParamVector {
        let count = idx.len() as f64;
        let mut g = ParamVector::zeros(self.p);
        for s in idx {
            let x = &u.data.inputs[s];
            let slope = self.sample_slope(w, x, u.data.targets[s]);
            for (gi, xi) in g.as_mut_slice().iter_mut().zip(x) {
                *gi += slope * xi;
            }
        }
        g.scale(1.0 / count)
    }

    pub fn local_loss(&self, m: usize, w: &ParamVector) -> Result<f64> {
        let u = self.user(m)?;
        w.check_dim(self.p)?;
        Ok(self.user_loss(u, w))
    }

    pub fn global_loss(&self, w: &ParamVector) -> Result<f64> {
        w.check_dim(self.p)?;
        if self.homogeneous {
            return Ok(self.user_loss(&self.users[0], w));
        }
        Ok(self
            .users
            .iter()
            .zip(&self.weights)
            .map(|(u, c)| c * self.user_loss(u, w))
            .sum())
    }

    pub fn local_gradient(&self, m: usize, w: &ParamVector) -> Result<ParamVector> {
        let u = self.user(m)?;
        w.check_dim(self.p)?;
        Ok(self.user_gradient(u, w))
    }

    pub fn global_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        w.check_dim(self.p)?;
        if self.homogeneous {
            return Ok(self.user_gradient(&self.users[0], w));
        }
        let mut g = ParamVector::zeros(self.p);
        for (u, c) in self.users.iter().zip(&self.weights) {
            g.axpy(*c, &self.user_gradient(u, w));
        }
        Ok(g)
    }

    /// Gradient of `F_m(w; xi)` over the given sample indices, regularizer
    /// included.
    pub fn batch_gradient(
        &self,
        m: usize,
        w: &ParamVector,
        indices: &[usize],
    ) -> Result<ParamVector> {
        let u = self.user(m)?;
        w.check_dim(self.p)?;
        if indices.is_empty() {
            return Err(Error::invalid("empty minibatch"));
        }
        if let Some(&bad) = indices.iter().find(|&&s| s >= u.data.len()) {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        let mut g = self.batch_sum(u, w.as_slice(), indices.iter().copied());
        g.axpy(self.loss.lambda(), w);
        Ok(g)
    }

    /// One stochastic gradient draw for user `m`.
    ///
    /// `RelativeNoise` perturbs the global gradient `grad F(w)` so that the
    /// local draw is unbiased for it and the noise norm is exactly
    /// `delta * ||grad F(w)||`.
    pub fn local_stoch_grad<R: Rng + ?Sized>(
        &self,
        m: usize,
        w: &ParamVector,
        mode: GradOracleMode,
        rng: &mut R,
    ) -> Result<ParamVector> {
        match mode {
            GradOracleMode::FullGradient => self.local_gradient(m, w),
            GradOracleMode::Minibatch { batch_size } => {
                let s = self.user(m)?.data.len();
                if batch_size == 0 || batch_size > s {
                    return Err(Error::invalid(format!(
                        "batch size {batch_size} must lie in [1, S_m = {s}]"
                    )));
                }
                let picked = index::sample(rng, s, batch_size).into_vec();
                self.batch_gradient(m, w, &picked)
            }
            GradOracleMode::RelativeNoise { delta } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
                }
                self.user(m)?;
                let mut g = self.global_gradient(w)?;
                let scale = delta * g.norm();
                if scale > 0.0 {
                    let dir = unit_direction(self.p, rng);
                    g.axpy(scale, &dir);
                }
                Ok(g)
            }
        }
    }

    pub fn validate_mode(&self, mode: GradOracleMode) -> Result<()> {
        match mode {
            GradOracleMode::Minibatch { batch_size } => {
                let min_s = self.users.iter().map(|u| u.data.len()).min().unwrap_or(0);
                if batch_size == 0 || batch_size > min_s {
                    return Err(Error::invalid(format!(
                        "batch size {batch_size} must lie in [1, min S_m = {min_s}]"
                    )));
                }
                Ok(())
            }
            GradOracleMode::RelativeNoise { delta } if !(delta >= 0.0 && delta.is_finite()) => {
                Err(Error::invalid(format!("delta must be >= 0, got {delta}")))
            }
            _ => Ok(()),
        }
    }

    /// Weighted average of the per-user `X^T X / S_m`.
    fn pooled_gram(&self) -> Matrix {
        if self.homogeneous {
            return self.users[0].gram.clone();
        }
        let mut h = Matrix::zeros(self.p);
        for (u, c) in self.users.iter().zip(&self.weights) {
            h.add_scaled(*c, &u.gram);
        }
        h
    }

    /// Hessian of the ridge objective: pooled Gram plus `lambda I`.
    pub fn ridge_hessian(&self) -> Result<Matrix> {
        match self.loss {
            LossKind::Ridge { lambda } => {
                let mut h = self.pooled_gram();
                h.add_diagonal(lambda);
                Ok(h)
            }
            LossKind::Logistic { .. } => {
                Err(Error::invalid("ridge_hessian called on a logistic problem"))
            }
        }
    }

    pub fn constants(&self, mode: GradOracleMode) -> Result<SmoothnessConstants> {
        const EIG_TOL: f64 = 1e-13;
        let (mu, l_const) = match self.loss {
            LossKind::Ridge { .. } => {
                let h = self.ridge_hessian()?;
                let l = linalg::max_eigenvalue(&h, EIG_TOL)?;
                let mu = match linalg::min_eigenvalue(&h, EIG_TOL) {
                    Ok(mu) => mu,
                    // Singular Hessian: not strongly convex.
                    Err(Error::Solver { .. }) => 0.0,
                    Err(e) => return Err(e),
                };
                (mu, l)
            }
            LossKind::Logistic { lambda } => {
                let mut h = Matrix::zeros(self.p);
                h.add_scaled(0.25, &self.pooled_gram());
                (lambda, linalg::max_eigenvalue(&h, EIG_TOL)? + lambda)
            }
        };
        let delta = match mode {
            GradOracleMode::FullGradient => 0.0,
            GradOracleMode::RelativeNoise { delta } => delta,
            GradOracleMode::Minibatch { .. } => f64::INFINITY,
        };
        Ok(SmoothnessConstants {
            mu: mu.min(l_const),
            l_const,
            delta,
        })
    }

    /// Global minimizer and minimum value.
    pub fn optimum(&self) -> Result<Optimum> {
        let w_star = match self.loss {
            LossKind::Ridge { .. } => {
                let h = self.ridge_hessian()?;
                let mut b = vec![0.0; self.p];
                if self.homogeneous {
                    b.clone_from(&self.users[0].xty);
                } else {
                    for (u, c) in self.users.iter().zip(&self.weights) {
                        for (bi, x) in b.iter_mut().zip(&u.xty) {
                            *bi += c * x;
                        }
                    }
                }
                ParamVector::new(linalg::spd_solve(&h, &b, 1e-12)?)
            }
            LossKind::Logistic { .. } => self.logistic_optimum()?,
        };
        let f_star = self.global_loss(&w_star)?;
        Ok(Optimum { w_star, f_star })
    }

    fn logistic_optimum(&self) -> Result<ParamVector> {
        const GRAD_TOL: f64 = 1e-10;
        const MAX_ITERS: usize = 1_000_000;
        let step = 1.0 / self.constants(GradOracleMode::FullGradient)?.l_const;
        let mut w = ParamVector::zeros(self.p);
        let mut g = self.global_gradient(&w)?;
        for _ in 0..MAX_ITERS {
            if g.norm() <= GRAD_TOL {
                return Ok(w);
            }
            w.axpy(-step, &g);
            g = self.global_gradient(&w)?;
        }
        Err(Error::Solver {
            what: "logistic optimum by gradient descent".into(),
            residual: g.norm(),
        })
    }

    /// Fraction of held-out samples classified correctly (logistic only).
    pub fn test_accuracy(&self, w: &ParamVector) -> Option<f64> {
        let test = self.test_set.as_ref()?;
        if !matches!(self.loss, LossKind::Logistic { .. }) {
            return None;
        }
        let correct = test
            .inputs
            .iter()
            .zip(&test.targets)
            .filter(|(x, &y)| (dot(x, w.as_slice()) > 0.0) == (y == 1.0))
            .count();
        Some(correct as f64 / test.len() as f64)
    }
}

/// Uniformly distributed direction on the unit sphere.
pub(crate) fn unit_direction<R: Rng + ?Sized>(p: usize, rng: &mut R) -> ParamVector {
    loop {
        let v = ParamVector::new((0..p).map(|_| rng.sample(StandardNormal)).collect());
        let n = v.norm();
        if n > 0.0 {
            return v.scale(1.0 / n);
        }
    }
}

const LABEL_NOISE: f64 = 0.1;

fn normal_vec<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

/// Synthetic federated problem.
///
/// Features are standard normal; ridge labels are `x^T w_true + 0.1 e` and
/// logistic labels are Bernoulli draws with probability `sigmoid(x^T w_true)`.
/// With `heterogeneity = 0` every user receives the same dataset; larger
/// values blend each user's features, labels and generating vector toward
/// independently drawn ones. Logistic problems also get a held-out split of
/// `samples_per_user` samples from the shared distribution.
pub fn make_synthetic(
    p: usize,
    users: usize,
    samples_per_user: usize,
    seed: u64,
    heterogeneity: f64,
    loss: LossKind,
) -> Result<Problem> {
    if p == 0 || users == 0 || samples_per_user == 0 {
        return Err(Error::invalid("p, M and S_per_user must all be >= 1"));
    }
    if !(0.0..=1.0).contains(&heterogeneity) {
        return Err(Error::invalid(format!(
            "heterogeneity must lie in [0, 1], got {heterogeneity}"
        )));
    }
    let contract = RngContract::new(seed);
    let mut base_rng = contract.stream_for(Purpose::Data, 0, 0, 0);
    let w_true = normal_vec(&mut base_rng, p);

    let label = |x: &[f64], w: &[f64], noise: f64, uniform: f64| -> f64 {
        let a = dot(x, w);
        match loss {
            LossKind::Ridge { .. } => a + LABEL_NOISE * noise,
            LossKind::Logistic { .. } => f64::from(uniform < sigmoid(a)),
        }
    };

    let sample_set = |rng: &mut rand_chacha::ChaCha8Rng, w: &[f64], count: usize| {
        let mut rows = Vec::with_capacity(count);
        let mut noise = Vec::with_capacity(count);
        let mut unif = Vec::with_capacity(count);
        for _ in 0..count {
            rows.push(normal_vec(rng, p));
            noise.push(rng.sample::<f64, _>(StandardNormal));
            unif.push(rng.random::<f64>());
        }
        let labels = rows
            .iter()
            .zip(noise.iter().zip(&unif))
            .map(|(x, (e, u))| label(x, w, *e, *u))
            .collect::<Vec<_>>();
        (rows, noise, unif, labels)
    };

    let (base_rows, base_noise, base_unif, base_labels) =
        sample_set(&mut base_rng, &w_true, samples_per_user);
    let base = Dataset::new(base_rows.clone(), base_labels)?;

    let per_user = if heterogeneity == 0.0 {
        vec![base; users]
    } else {
        let h = heterogeneity;
        (0..users)
            .map(|m| {
                let mut rng = contract.stream_for(Purpose::Data, 0, m as u32 + 1, 0);
                let shift = normal_vec(&mut rng, p);
                let w_user: Vec<f64> = w_true.iter().zip(&shift).map(|(a, b)| a + h * b).collect();
                let (rows, noise, unif, _) = sample_set(&mut rng, &w_user, samples_per_user);
                let mut inputs = Vec::with_capacity(samples_per_user);
                let mut targets = Vec::with_capacity(samples_per_user);
                for s in 0..samples_per_user {
                    let x: Vec<f64> = base_rows[s]
                        .iter()
                        .zip(&rows[s])
                        .map(|(a, b)| (1.0 - h) * a + h * b)
                        .collect();
                    let e = (1.0 - h) * base_noise[s] + h * noise[s];
                    let u = if h < 0.5 { base_unif[s] } else { unif[s] };
                    targets.push(label(&x, &w_user, e, u));
                    inputs.push(x);
                }
                Dataset::new(inputs, targets)
            })
            .collect::<Result<Vec<_>>>()?
    };

    let problem = Problem::new(per_user, loss)?;
    match loss {
        LossKind::Logistic { .. } => {
            let mut rng = contract.stream_for(Purpose::Data, 0, u32::MAX, 0);
            let (rows, _, _, labels) = sample_set(&mut rng, &w_true, samples_per_user);
            problem.with_test_set(Dataset::new(rows, labels)?)
        }
        LossKind::Ridge { .. } => Ok(problem),
    }
}
