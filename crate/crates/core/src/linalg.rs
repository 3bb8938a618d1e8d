//! Small dense symmetric-matrix helpers: Cholesky solves and extreme
//! eigenvalues by (inverse) power iteration.

use crate::error::{Error, Result};
use crate::vector::dot;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += alpha * x x^T`
    pub fn add_outer(&mut self, alpha: f64, x: &[f64]) {
        for i in 0..self.n {
            let s = alpha * x[i];
            let row = &mut self.data[i * self.n..(i + 1) * self.n];
            for (r, &xj) in row.iter_mut().zip(x) {
                *r += s * xj;
            }
        }
    }

    pub fn add_diagonal(&mut self, alpha: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += alpha;
        }
    }

    /// Lower-triangular Cholesky factor. Fails if the matrix is not
    /// numerically positive definite.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Solver {
                    what: "cholesky factorization (matrix not positive definite)".into(),
                    residual: d,
                });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky with
/// iterative refinement until `||a x - b|| <= rel_tol * ||b||`.
pub fn spd_solve(a: &Matrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let chol = a.cholesky()?;
    let mut x = chol.solve(b);
    let b_norm = norm(b);
    let mut res_norm = f64::INFINITY;
    for _ in 0..10 {
        let r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        res_norm = norm(&r);
        if res_norm <= rel_tol * b_norm {
            return Ok(x);
        }
        let dx = chol.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Err(Error::Solver {
        what: "linear solve for the optimum".into(),
        residual: res_norm,
    })
}

const EIG_MAX_ITERS: usize = 200_000;

/// Start vector with all-nonzero, non-symmetric entries so it has a component
/// along every eigenvector with probability one.
fn start_vector(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.618_033_988_749_895 * i as f64 % 1.0)
        .collect();
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

fn iterate_rayleigh(
    n: usize,
    rel_tol: f64,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    let mut v = start_vector(n);
    let mut theta = f64::NAN;
    for _ in 0..EIG_MAX_ITERS {
        let w = apply(&v);
        let next_theta = dot(&v, &w);
        let w_norm = norm(&w);
        if w_norm == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / w_norm).collect();
        if (next_theta - theta).abs() <= rel_tol * next_theta.abs() {
            return Ok(next_theta);
        }
        theta = next_theta;
    }
    Err(Error::Solver {
        what: "power iteration".into(),
        residual: theta,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn max_eigenvalue(a: &Matrix, rel_tol: f64) -> Result<f64> {
    iterate_rayleigh(a.dim(), rel_tol, |v| a.matvec(v))
}

/// Smallest eigenvalue of a symmetric positive definite matrix, by power
/// iteration on the inverse.
pub fn min_eigenvalue(a: &Matrix, rel_tol: f64) -> Result<f64> {
    let chol = a.cholesky()?;
    let inv_max = iterate_rayleigh(a.dim(), rel_tol, |v| chol.solve(v))?;
    Ok(1.0 / inv_max)
}
