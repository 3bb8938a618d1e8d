//! Robust aggregation of uploaded parameter vectors.
//!
//! The main rule is the (unweighted) geometric median
//! `argmin_z sum_m ||z - z_m||_2`, computed with a smoothed Weiszfeld
//! iteration. Before iterating, two exact exits are tried:
//!
//! 1. a strict-majority coincidence point is returned as is;
//! 2. any input point that satisfies the data-point optimality condition
//!    `||sum_{m != j} (x_j - z_m)/||x_j - z_m|| || <= multiplicity(x_j)` is
//!    returned as is.
//!
//! Coordinate-wise mean, median and trimmed mean are provided as baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{uniform_dim, ParamVector};

/// Stopping and smoothing parameters for the Weiszfeld iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeiszfeldConfig {
    /// Threshold on the iterate displacement and on the subgradient residual.
    pub tol: f64,
    pub max_iters: usize,
    /// Distance floor, relative to the spread of the inputs.
    pub smoothing: f64,
}

impl Default for WeiszfeldConfig {
    fn default() -> Self {
        WeiszfeldConfig {
            tol: 1e-10,
            max_iters: 1000,
            smoothing: 1e-10,
        }
    }
}

impl WeiszfeldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::invalid(format!(
                "smoothing must be >= 0, got {}",
                self.smoothing
            )));
        }
        Ok(())
    }
}

/// Output of an aggregation call.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub value: ParamVector,
    /// Accepted Weiszfeld updates (0 for exact exits and baseline rules).
    pub iterations: usize,
    /// Geometric-median objective at `value`.
    pub objective: f64,
    pub converged: bool,
    /// Norm of the minimal smoothed subgradient at `value`.
    pub residual: f64,
}

/// Sum of Euclidean distances from `z` to every point.
pub fn geomed_objective(points: &[ParamVector], z: &ParamVector) -> Result<f64> {
    let p = uniform_dim(points)?;
    z.check_dim(p)?;
    Ok(objective_unchecked(points, z))
}

fn objective_unchecked(points: &[ParamVector], z: &ParamVector) -> f64 {
    points.iter().map(|x| x.dist(z)).sum()
}

/// Coordinate-wise arithmetic mean.
pub fn mean(points: &[ParamVector]) -> Result<ParamVector> {
    let p = uniform_dim(points)?;
    Ok(mean_unchecked(points, p))
}

fn mean_unchecked(points: &[ParamVector], p: usize) -> ParamVector {
    let mut acc = ParamVector::zeros(p);
    for x in points {
        acc.axpy(1.0, x);
    }
    acc.scale(1.0 / points.len() as f64)
}

/// Per-coordinate median; even counts average the two middle values.
pub fn coordinate_median(points: &[ParamVector]) -> Result<ParamVector> {
    let p = uniform_dim(points)?;
    let n = points.len();
    let mut column = vec![0.0; n];
    let coords = (0..p)
        .map(|i| {
            for (slot, x) in column.iter_mut().zip(points) {
                *slot = x[i];
            }
            column.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                column[n / 2]
            } else {
                0.5 * (column[n / 2 - 1] + column[n / 2])
            }
        })
        .collect();
    Ok(ParamVector::new(coords))
}

/// Per-coordinate mean after dropping `floor(trim_fraction * n)` values from
/// each tail.
pub fn trimmed_mean(points: &[ParamVector], trim_fraction: f64) -> Result<ParamVector> {
    let p = uniform_dim(points)?;
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::invalid(format!(
            "trim_fraction must lie in [0, 0.5), got {trim_fraction}"
        )));
    }
    let n = points.len();
    let cut = (trim_fraction * n as f64).floor() as usize;
    let kept = n - 2 * cut;
    let mut column = vec![0.0; n];
    let coords = (0..p)
        .map(|i| {
            for (slot, x) in column.iter_mut().zip(points) {
                *slot = x[i];
            }
            column.sort_by(f64::total_cmp);
            column[cut..n - cut].iter().sum::<f64>() / kept as f64
        })
        .collect();
    Ok(ParamVector::new(coords))
}

/// Boyer-Moore vote for a point repeated strictly more than n/2 times.
fn strict_majority(points: &[ParamVector]) -> Option<&ParamVector> {
    let mut candidate = &points[0];
    let mut count = 0usize;
    for x in points {
        if count == 0 {
            candidate = x;
            count = 1;
        } else if x == candidate {
            count += 1;
        } else {
            count -= 1;
        }
    }
    let occurrences = points.iter().filter(|x| *x == candidate).count();
    (2 * occurrences > points.len()).then_some(candidate)
}

/// Minimal-norm smoothed subgradient at `z`: points within `floor` of `z`
/// count as coincident and contribute the unit ball.
fn residual_at(points: &[ParamVector], z: &ParamVector, dists: &[f64], floor: f64) -> f64 {
    let mut pull = ParamVector::zeros(z.dim());
    let mut coincident = 0usize;
    for (x, &d) in points.iter().zip(dists) {
        if d <= floor {
            coincident += 1;
        } else {
            for i in 0..z.dim() {
                pull[i] += (z[i] - x[i]) / d;
            }
        }
    }
    (pull.norm() - coincident as f64).max(0.0)
}

/// Returns the first input point that is itself an exact minimizer.
fn optimal_data_point(points: &[ParamVector], floor: f64) -> Option<usize> {
    let mut dists = vec![0.0; points.len()];
    for (j, x) in points.iter().enumerate() {
        // Skip duplicates of earlier points; they were already tested.
        if points[..j].iter().any(|y| y == x) {
            continue;
        }
        for (d, y) in dists.iter_mut().zip(points) {
            *d = x.dist(y);
        }
        if residual_at(points, x, &dists, floor) == 0.0 {
            return Some(j);
        }
    }
    None
}

fn spread(points: &[ParamVector], center: &ParamVector) -> f64 {
    points.iter().map(|x| x.dist(center)).fold(0.0, f64::max)
}

/// Geometric median by smoothed Weiszfeld iteration started at the mean.
pub fn geometric_median(points: &[ParamVector], cfg: &WeiszfeldConfig) -> Result<AggregateResult> {
    weiszfeld(points, cfg, None)
}

/// Same as [`geometric_median`], also returning the objective value after
/// each accepted iterate (the first entry is the objective at the start).
pub fn geometric_median_traced(
    points: &[ParamVector],
    cfg: &WeiszfeldConfig,
) -> Result<(AggregateResult, Vec<f64>)> {
    let mut history = Vec::new();
    let res = weiszfeld(points, cfg, Some(&mut history))?;
    Ok((res, history))
}

/// Largest extrapolation factor tried along a Weiszfeld step.
const MAX_STRETCH: f64 = 1024.0;

/// `f(z + s) - f(z)`, summed term by term as
/// `(s . (2z + s - 2x)) / (|x - z - s| + |x - z|)` so that it stays accurate
/// when a few far-away points dominate `f`.
fn objective_change(
    points: &[ParamVector],
    z: &ParamVector,
    s: &ParamVector,
    dists: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (x, &d) in points.iter().zip(dists) {
        let mut num = 0.0;
        let mut moved_sq = 0.0;
        for i in 0..z.dim() {
            let r = z[i] - x[i];
            num += s[i] * (2.0 * r + s[i]);
            moved_sq += (r + s[i]) * (r + s[i]);
        }
        let denom = moved_sq.sqrt() + d;
        if denom > 0.0 {
            total += num / denom;
        }
    }
    total
}

/// Newton direction for the objective at a non-data point, from conjugate
/// gradients on the Hessian `sum_i (I - u_i u_i^T) / d_i`. `None` when some
/// point lies within the smoothing floor or the Hessian is numerically
/// singular along the search.
fn newton_direction(
    points: &[ParamVector],
    z: &ParamVector,
    dists: &[f64],
    floor: f64,
) -> Option<ParamVector> {
    if dists.iter().any(|&d| d <= floor) {
        return None;
    }
    let p = z.dim();
    let units: Vec<ParamVector> = points
        .iter()
        .zip(dists)
        .map(|(x, &d)| z.sub(x).scale(1.0 / d))
        .collect();
    let hess = |v: &ParamVector| {
        let mut out = ParamVector::zeros(p);
        for (u, &d) in units.iter().zip(dists) {
            let c = u.dot(v);
            for i in 0..p {
                out[i] += (v[i] - c * u[i]) / d;
            }
        }
        out
    };
    let mut grad = ParamVector::zeros(p);
    for u in &units {
        grad.axpy(1.0, u);
    }
    let g_norm = grad.norm();
    if g_norm == 0.0 {
        return None;
    }
    // Upper bound on the Hessian's largest eigenvalue.
    let h_max: f64 = dists.iter().map(|d| 1.0 / d).sum();
    let mut x = ParamVector::zeros(p);
    let mut r = grad.scale(-1.0);
    let mut dir = r.clone();
    let mut rr = r.norm_sq();
    for _ in 0..(2 * p).max(10) {
        let hd = hess(&dir);
        let curv = dir.dot(&hd);
        if !(curv > 1e-12 * h_max * dir.norm_sq()) {
            return None;
        }
        let a = rr / curv;
        x.axpy(a, &dir);
        r.axpy(-a, &hd);
        let next = r.norm_sq();
        if next.sqrt() <= 1e-12 * g_norm {
            break;
        }
        dir = r.add(&dir.scale(next / rr));
        rr = next;
    }
    x.is_finite().then_some(x)
}

fn weiszfeld(
    points: &[ParamVector],
    cfg: &WeiszfeldConfig,
    mut history: Option<&mut Vec<f64>>,
) -> Result<AggregateResult> {
    cfg.validate()?;
    let p = uniform_dim(points)?;
    if let Some(bad) = points.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "point {bad} has non-finite entries"
        )));
    }

    let exact = |value: &ParamVector| AggregateResult {
        value: value.clone(),
        iterations: 0,
        objective: objective_unchecked(points, value),
        converged: true,
        residual: 0.0,
    };

    if let Some(z0) = strict_majority(points) {
        let res = exact(z0);
        if let Some(h) = history.as_deref_mut() {
            h.push(res.objective);
        }
        return Ok(res);
    }

    let mut z = mean_unchecked(points, p);
    let floor = (cfg.smoothing * spread(points, &z)).max(f64::MIN_POSITIVE);

    if let Some(j) = optimal_data_point(points, floor) {
        let res = exact(&points[j]);
        if let Some(h) = history.as_deref_mut() {
            h.push(res.objective);
        }
        return Ok(res);
    }

    let n = points.len();
    let mut dists = vec![0.0; n];
    let fill = |z: &ParamVector, dists: &mut [f64]| {
        for (d, x) in dists.iter_mut().zip(points) {
            *d = x.dist(z);
        }
        dists.iter().sum::<f64>()
    };

    let mut objective = fill(&z, &mut dists);
    let mut residual = residual_at(points, &z, &dists, floor);
    if let Some(h) = history.as_deref_mut() {
        h.push(objective);
    }
    let mut iterations = 0usize;
    let mut displacement = f64::INFINITY;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let mut target = ParamVector::zeros(p);
        let mut total = 0.0;
        for (x, &d) in points.iter().zip(&dists) {
            let w = 1.0 / d.max(floor);
            target.axpy(w, x);
            total += w;
        }
        let dir = target.scale(1.0 / total).sub(&z);
        let step = dir.norm();
        if step == 0.0 {
            displacement = 0.0;
            break;
        }

        // Weiszfeld step, stretched while the objective keeps falling.
        let mut best = (dir.clone(), objective_change(points, &z, &dir, &dists));
        let mut stretch = 2.0;
        while best.1 < 0.0 && stretch <= MAX_STRETCH {
            let trial = dir.scale(stretch);
            let change = objective_change(points, &z, &trial, &dists);
            if change >= best.1 {
                break;
            }
            best = (trial, change);
            stretch *= 2.0;
        }
        // Damped Newton step; it wins in flat valleys where Weiszfeld crawls.
        if let Some(mut trial) = newton_direction(points, &z, &dists, floor) {
            for _ in 0..40 {
                let change = objective_change(points, &z, &trial, &dists);
                if change < 0.0 {
                    if change < best.1 {
                        best = (trial, change);
                    }
                    break;
                }
                trial = trial.scale(0.5);
            }
        }
        if best.1 > 0.0 {
            displacement = step;
            break;
        }
        let chosen = best.0;

        z.axpy(1.0, &chosen);
        objective = fill(&z, &mut dists);
        residual = residual_at(points, &z, &dists, floor);
        displacement = chosen.norm();
        iterations += 1;
        if let Some(h) = history.as_deref_mut() {
            h.push(objective);
        }

        if displacement <= cfg.tol && residual <= cfg.tol {
            converged = true;
            break;
        }
    }

    if !converged {
        converged = displacement <= cfg.tol && residual <= cfg.tol;
    }

    Ok(AggregateResult {
        value: z,
        iterations,
        objective,
        converged,
        residual,
    })
}

/// `(2 - 2a) / (1 - 2a)`, the robustness amplification for a corrupted
/// fraction `a < 1/2`.
pub fn robustness_constant(alpha: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::invalid(format!(
            "corrupted fraction must lie in [0, 1/2), got {alpha}: geometric median has no robustness guarantee at or above half corruption"
        )));
    }
    Ok((2.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha))
}

/// Robustness certificate for `q` corrupted points out of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessCert {
    pub n: usize,
    pub q: usize,
    pub alpha: f64,
    pub c_alpha: f64,
}

impl RobustnessCert {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("point count must be >= 1"));
        }
        if 2 * q >= n {
            return Err(Error::invalid(format!(
                "q = {q} of n = {n}: geometric median has no robustness guarantee at or above half corruption"
            )));
        }
        let alpha = q as f64 / n as f64;
        Ok(RobustnessCert {
            n,
            q,
            alpha,
            c_alpha: robustness_constant(alpha)?,
        })
    }
}

/// If at least `n - q` points lie within `radius` of `center`, the geometric
/// median lies within `c_alpha * radius` of `center`. Returns whether the
/// computed median satisfies that bound.
pub fn ball_robustness_check(
    points: &[ParamVector],
    center: &ParamVector,
    radius: f64,
    q: usize,
) -> Result<bool> {
    ball_robustness_check_with(points, center, radius, q, &WeiszfeldConfig::default())
}

pub fn ball_robustness_check_with(
    points: &[ParamVector],
    center: &ParamVector,
    radius: f64,
    q: usize,
    cfg: &WeiszfeldConfig,
) -> Result<bool> {
    let p = uniform_dim(points)?;
    center.check_dim(p)?;
    let cert = RobustnessCert::new(points.len(), q)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be >= 0, got {radius}")));
    }
    let inside = points.iter().filter(|x| x.dist(center) <= radius).count();
    if inside < points.len() - q {
        return Err(Error::invalid(format!(
            "only {inside} of {} points lie within radius {radius} of the center; need at least {}",
            points.len(),
            points.len() - q
        )));
    }
    let gm = geometric_median(points, cfg)?;
    Ok(gm.value.dist(center) <= cert.c_alpha * radius + 10.0 * cfg.tol)
}

/// Server-side aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Aggregator {
    GeometricMedian(WeiszfeldConfig),
    Mean,
    CoordinateMedian,
    TrimmedMean { fraction: f64 },
}

impl Default for Aggregator {
    fn default() -> Self {
        Aggregator::GeometricMedian(WeiszfeldConfig::default())
    }
}

impl Aggregator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Aggregator::GeometricMedian(cfg) => cfg.validate(),
            Aggregator::TrimmedMean { fraction } if !(0.0..0.5).contains(fraction) => {
                Err(Error::invalid(format!(
                    "trim fraction must lie in [0, 0.5), got {fraction}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Aggregator::GeometricMedian(_) => "geometric_median",
            Aggregator::Mean => "mean",
            Aggregator::CoordinateMedian => "coordinate_median",
            Aggregator::TrimmedMean { .. } => "trimmed_mean",
        }
    }

    pub fn aggregate(&self, points: &[ParamVector]) -> Result<AggregateResult> {
        let value = match self {
            Aggregator::GeometricMedian(cfg) => return geometric_median(points, cfg),
            Aggregator::Mean => mean(points)?,
            Aggregator::CoordinateMedian => coordinate_median(points)?,
            Aggregator::TrimmedMean { fraction } => trimmed_mean(points, *fraction)?,
        };
        Ok(AggregateResult {
            objective: objective_unchecked(points, &value),
            value,
            iterations: 0,
            converged: true,
            residual: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn pts(vs: &[&[f64]]) -> Vec<ParamVector> {
        vs.iter().map(|v| pv(v)).collect()
    }

    #[test]
    fn objective_examples() {
        assert_eq!(
            geomed_objective(&pts(&[&[0.0, 0.0]]), &pv(&[3.0, 4.0])).unwrap(),
            5.0
        );
        assert_eq!(
            geomed_objective(&pts(&[&[1.0, 0.0], &[-1.0, 0.0]]), &pv(&[0.0, 0.0])).unwrap(),
            2.0
        );
        assert_eq!(
            geomed_objective(
                &pts(&[&[0.0, 0.0], &[4.0, 0.0], &[0.0, 3.0]]),
                &pv(&[0.0, 0.0])
            )
            .unwrap(),
            7.0
        );
    }

    #[test]
    fn objective_errors() {
        assert!(matches!(
            geomed_objective(&[], &pv(&[0.0])),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            geomed_objective(&pts(&[&[0.0, 0.0]]), &pv(&[0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_point() {
        let r = geometric_median(&pts(&[&[2.0, 7.0]]), &WeiszfeldConfig::default()).unwrap();
        assert_eq!(r.value, pv(&[2.0, 7.0]));
        assert!(r.converged);
    }

    #[test]
    fn symmetric_cross() {
        let p = pts(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
        let r = geometric_median(&p, &WeiszfeldConfig::default()).unwrap();
        assert!(r.value.norm() <= 1e-10, "{:?}", r.value);
    }

    #[test]
    fn one_dimensional_median() {
        let p = pts(&[&[0.0], &[1.0], &[10.0]]);
        let r = geometric_median(&p, &WeiszfeldConfig::default()).unwrap();
        assert!((r.value[0] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn majority_coincidence_is_exact() {
        let p = pts(&[
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[50.0, 50.0],
            &[-99.0, 3.0],
        ]);
        let r = geometric_median(&p, &WeiszfeldConfig::default()).unwrap();
        assert_eq!(r.value, pv(&[0.0, 0.0]));
        assert_eq!(r.iterations, 0);
        assert!(r.converged && r.residual == 0.0);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let p = pts(&[
            &[0.0, 0.0],
            &[10.0, 0.0],
            &[0.0, 7.0],
            &[3.0, 3.0],
            &[-4.0, 1.0],
        ]);
        let cfg = WeiszfeldConfig {
            max_iters: 1,
            ..Default::default()
        };
        let r = geometric_median(&p, &cfg).unwrap();
        assert!(!r.converged);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn invalid_config_rejected() {
        let p = pts(&[&[0.0]]);
        for cfg in [
            WeiszfeldConfig {
                tol: 0.0,
                ..Default::default()
            },
            WeiszfeldConfig {
                max_iters: 0,
                ..Default::default()
            },
            WeiszfeldConfig {
                smoothing: -1.0,
                ..Default::default()
            },
        ] {
            assert!(geometric_median(&p, &cfg).is_err());
        }
    }

    #[test]
    fn baselines() {
        assert_eq!(
            mean(&pts(&[&[0.0, 0.0], &[2.0, 2.0]])).unwrap(),
            pv(&[1.0, 1.0])
        );
        assert_eq!(
            coordinate_median(&pts(&[&[0.0], &[1.0], &[10.0]])).unwrap(),
            pv(&[1.0])
        );
        assert_eq!(
            coordinate_median(&pts(&[&[0.0], &[1.0], &[3.0], &[10.0]])).unwrap(),
            pv(&[2.0])
        );
        assert_eq!(
            trimmed_mean(&pts(&[&[0.0], &[1.0], &[2.0], &[3.0], &[100.0]]), 0.2).unwrap(),
            pv(&[2.0])
        );
        assert!(trimmed_mean(&pts(&[&[0.0]]), 0.5).is_err());
        assert!(mean(&[]).is_err());
        assert!(coordinate_median(&pts(&[&[0.0], &[1.0, 2.0]])).is_err());
    }

    #[test]
    fn ball_check_examples() {
        let p = pts(&[&[0.0, 0.0], &[0.0, 0.0], &[1e6, 1e6]]);
        assert!(ball_robustness_check(&p, &pv(&[0.0, 0.0]), 0.0, 1).unwrap());

        let p = pts(&[
            &[0.5, 0.0],
            &[-0.3, 0.6],
            &[0.0, -0.9],
            &[1e5, -3e4],
            &[-7e3, 2e5],
        ]);
        assert!(ball_robustness_check(&p, &pv(&[0.0, 0.0]), 1.0, 2).unwrap());
        assert!((RobustnessCert::new(5, 2).unwrap().c_alpha - 6.0).abs() < 1e-12);

        assert!(matches!(
            ball_robustness_check(&p, &pv(&[0.0, 0.0]), 1.0, 3),
            Err(Error::InvalidInput(_))
        ));
        // Too few points inside the ball.
        assert!(ball_robustness_check(&p, &pv(&[0.0, 0.0]), 0.1, 2).is_err());
    }

    #[test]
    fn cert_constant_floor() {
        let c = RobustnessCert::new(10, 0).unwrap();
        assert_eq!(c.c_alpha, 2.0);
        assert!(RobustnessCert::new(4, 2).is_err());
    }
}
