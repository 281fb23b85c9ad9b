//! Small dense helpers on top of nalgebra: Cholesky with triangular solves and
//! a Lanczos iteration for extremal eigenvalues of implicit symmetric maps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub struct Chol {
    l: DMatrix<f64>,
}

impl Chol {
    pub fn new(a: DMatrix<f64>) -> Option<Self> {
        nalgebra::Cholesky::new(a).map(|c| Self { l: c.unpack() })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// x = L^{-1} b
    pub fn solve_l(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.solve_lower_triangular(b).expect("nonsingular factor")
    }

    /// x = L^{-T} b
    pub fn solve_lt(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.tr_solve_lower_triangular(b).expect("nonsingular factor")
    }
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    nalgebra::Cholesky::new(a.clone()).is_some()
}

#[derive(Clone, Debug)]
pub struct Ritz {
    /// Ritz values, ascending.
    pub values: Vec<f64>,
    pub max_vector: DVector<f64>,
    pub min_vector: DVector<f64>,
}

/// Lanczos with full reorthogonalisation; `steps` is capped at `n`.
pub fn lanczos(n: usize, steps: usize, seed: u64, mut op: impl FnMut(&DVector<f64>) -> DVector<f64>) -> Ritz {
    let k = steps.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    for j in 0..k {
        basis.push(q.clone());
        let mut w = op(&q);
        let a = q.dot(&w);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let bn = w.norm();
        if j + 1 == k || bn <= 1e-13 * alpha.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300) {
            break;
        }
        beta.push(bn);
        q = w / bn;
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vec_of = |col: usize| {
        let mut x = DVector::zeros(n);
        for (i, b) in basis.iter().take(m).enumerate() {
            x.axpy(eig.eigenvectors[(i, col)], b, 1.0);
        }
        x
    };
    Ritz {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        max_vector: vec_of(order[m - 1]),
        min_vector: vec_of(order[0]),
    }
}

/// Largest eigenvalue of a dense symmetric matrix.
pub fn lambda_max(a: &DMatrix<f64>, steps: usize) -> f64 {
    *lanczos(a.nrows(), steps, 7, |x| a * x).values.last().unwrap()
}

/// Orthonormal columns (Euclidean) spanning the given vectors.
pub fn orthonormalize(vs: &[Vec<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut x = DVector::from_column_slice(v);
        let n0 = x.norm();
        for _ in 0..2 {
            for b in &out {
                let c = b.dot(&x);
                x.axpy(-c, b, 1.0);
            }
        }
        let nx = x.norm();
        if nx <= 1e-10 * n0 {
            return Err(Error::Numerical("dependent vectors in orthonormalization".into()));
        }
        out.push(x / nx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos_finds_extremes() {
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let r = lanczos(n, 40, 1, |x| &a * x);
        assert!((r.values[0] - 1.0).abs() < 1e-8);
        assert!((r.values.last().unwrap() - 40.0).abs() < 1e-8);
    }

    #[test]
    fn cholesky_solves() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let c = Chol::new(a.clone()).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let y = c.solve_lt(&c.solve_l(&b));
        assert!((&a * y - b).norm() < 1e-14);
        assert!(!is_positive_definite(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])));
    }
}
