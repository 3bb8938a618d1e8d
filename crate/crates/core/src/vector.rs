//! Dense real parameter vectors.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A p-dimensional real vector: a model parameter, an upload, or a gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Self {
        ParamVector(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &ParamVector) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| a * s).collect())
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &ParamVector) {
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks that `points` is nonempty and every vector has the same dimension.
/// Returns that dimension.
pub(crate) fn uniform_dim(points: &[ParamVector]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("empty point list"))?;
    let p = first.dim();
    if p == 0 {
        return Err(Error::invalid("vectors must have dimension >= 1"));
    }
    for v in &points[1..] {
        v.check_dim(p)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_arithmetic() {
        let a = ParamVector::new(vec![3.0, 4.0]);
        let b = ParamVector::new(vec![1.0, 1.0]);
        assert_eq!(a.norm(), 5.0);
        assert_eq!(a.sub(&b), ParamVector::new(vec![2.0, 3.0]));
        assert_eq!(a.dist_sq(&b), 13.0);
        let mut c = b.clone();
        c.axpy(2.0, &a);
        assert_eq!(c, ParamVector::new(vec![7.0, 9.0]));
    }

    #[test]
    fn uniform_dim_rejects_mismatch_and_empty() {
        assert!(uniform_dim(&[]).is_err());
        let pts = vec![ParamVector::zeros(2), ParamVector::zeros(3)];
        assert_eq!(
            uniform_dim(&pts),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        );
    }
}
