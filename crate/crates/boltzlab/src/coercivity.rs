//! Spectral coercivity diagnostics for the assembled operators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::Assembled;
use crate::error::{Error, Result};
use crate::grid::{norm2, Projector, VelocityGrid, WeightSpec};
use crate::linalg::{is_positive_definite, lanczos, orthonormalize, Chol};
use crate::operator::OperatorMatrix;

const LANCZOS_STEPS: usize = 80;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub points_per_axis: usize,
    pub theta_min: f64,
    /// Largest d with (Lg, g) >= d ||(I-P) g||_D^2.
    pub delta0: f64,
    /// Smallest Rayleigh quotients (L g, g) / ||g||_D^2 on the complement of ker P, ascending.
    pub lowest_ratios: Vec<f64>,
    /// max over the five invariants of ||L phi|| / ||phi||.
    pub kernel_residual: f64,
    pub dgram_min_eig: f64,
    pub dgram_norm: f64,
    /// (L1 f, f) >= delta ||f||_D^2 - c ||f||^2
    pub l1_delta: f64,
    pub l1_c: f64,
    /// |(L2 f, g)| <= c ||mu^{1/1000} f|| ||mu^{1/1000} g||
    pub l2_c: f64,
    pub weighted: Option<WeightedCoercivity>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedCoercivity {
    pub weight: WeightSpec,
    pub radius: f64,
    /// (L g, w^2 g) >= delta_q ||w g||_D^2 - c ||g||^2_{B_R}
    pub delta_q: f64,
    pub c: f64,
}

fn raw(m: &OperatorMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.n, m.n, &m.data)
}

/// Extremal eigenvalues of a dense symmetric matrix.
fn extremes(a: &DMatrix<f64>, steps: usize) -> (f64, f64) {
    let r = lanczos(a.nrows(), steps, 11, |x| a * x);
    (r.values[0], *r.values.last().unwrap())
}

pub fn kernel_residual(grid: &VelocityGrid, l: &OperatorMatrix) -> Result<f64> {
    let p = Projector::new(grid)?;
    Ok(p.basis()
        .iter()
        .map(|phi| grid.norm_real(&l.apply_real(phi)) / grid.norm_real(phi))
        .fold(0.0, f64::max))
}

/// delta0 and friends from the pencil (L, D) on the complement of the kernel.
pub fn coercivity_spectrum(grid: &VelocityGrid, ops: &Assembled) -> Result<CoercivityReport> {
    let m = grid.len();
    let proj = Projector::new(grid)?;
    let k = orthonormalize(proj.basis())?;
    let l = raw(&ops.l);
    let gd = raw(&ops.dgram);

    let (gmin, gmax) = extremes(&gd, LANCZOS_STEPS);
    if gmin < -1e-8 * gmax {
        return Err(Error::Numerical(format!(
            "dissipation Gram matrix is not positive semidefinite: min eigenvalue {gmin:e}, norm {gmax:e}"
        )));
    }

    // Deflate the kernel: L + alpha K K^T is definite and equals L on the complement.
    let alpha = (0..m).map(|i| l[(i, i)]).sum::<f64>() / m as f64;
    let mut la = l.clone();
    for kv in &k {
        la.ger(alpha, kv, kv, 1.0);
    }
    let chol = Chol::new(la).ok_or_else(|| {
        Error::Numerical("L is not positive definite on the complement of its kernel".into())
    })?;
    let perp = |x: &DVector<f64>| {
        let mut y = x.clone();
        for kv in &k {
            let c = kv.dot(&y);
            y.axpy(-c, kv, 1.0);
        }
        y
    };
    let ritz = lanczos(m, LANCZOS_STEPS, 3, |x| {
        let z = chol.solve_lt(x);
        let z = perp(&(&gd * perp(&z)));
        chol.solve_l(&z)
    });
    let top = *ritz.values.last().unwrap();
    if !(top > 0.0) {
        return Err(Error::Numerical("degenerate dissipation pencil".into()));
    }
    let delta0 = 1.0 / top;
    let lowest_ratios = ritz.values.iter().rev().take(5).map(|x| 1.0 / x).collect();

    let l1 = raw(&ops.l1);
    let l1_delta = 0.5 * delta0;
    let (_, l1_c) = extremes(&(&gd * l1_delta - &l1), LANCZOS_STEPS);

    let scale: Vec<f64> = grid.mu().iter().map(|x| x.powf(-1e-3)).collect();
    let l2s = DMatrix::from_fn(m, m, |i, j| ops.l2.get(i, j) * scale[i] * scale[j]);
    let (a, b) = extremes(&l2s, LANCZOS_STEPS);

    Ok(CoercivityReport {
        points_per_axis: grid.points_per_axis(),
        theta_min: ops.l.provenance.as_ref().map_or(f64::NAN, |p| p.spec.theta_min),
        delta0,
        lowest_ratios,
        kernel_residual: kernel_residual(grid, &ops.l)?,
        dgram_min_eig: gmin,
        dgram_norm: gmax,
        l1_delta,
        l1_c: l1_c.max(0.0),
        l2_c: a.abs().max(b.abs()),
        weighted: None,
    })
}

/// Constants for (L g, w^2 g) >= delta_q ||w g||_D^2 - C ||g||^2_{B_R}.
///
/// delta_q is half the smallest pencil eigenvalue on fields vanishing inside the
/// ball; C is then the smallest value (to 1e-3 relative) making the remainder
/// form positive definite.
pub fn weighted_coercivity(
    grid: &VelocityGrid,
    ops: &Assembled,
    weight: WeightSpec,
    radius: f64,
) -> Result<WeightedCoercivity> {
    let m = grid.len();
    let w = weight.field(grid);
    let w2: Vec<f64> = w.iter().map(|x| x * x).collect();
    let s = DMatrix::from_fn(m, m, |i, j| 0.5 * ops.l.get(i, j) * (w2[i] + w2[j]));
    let t = DMatrix::from_fn(m, m, |i, j| ops.dgram.get(i, j) * w[i] * w[j]);
    let outside: Vec<usize> =
        (0..m).filter(|&i| norm2(grid.node(i)) > radius * radius).collect();
    if outside.is_empty() || outside.len() == m {
        return Err(Error::invalid(format!("ball radius {radius} leaves no split of the grid")));
    }
    let no = outside.len();
    let s_out = DMatrix::from_fn(no, no, |i, j| s[(outside[i], outside[j])]);
    let t_out = DMatrix::from_fn(no, no, |i, j| t[(outside[i], outside[j])]);
    let chol = Chol::new(t_out)
        .ok_or_else(|| Error::Numerical("weighted Gram matrix is singular outside the ball".into()))?;
    let ritz = lanczos(no, 150, 5, |x| chol.solve_l(&(&s_out * chol.solve_lt(x))));
    let dmin = ritz.values[0];
    if !(dmin > 0.0) {
        return Err(Error::Numerical(format!(
            "weighted form is not coercive outside B_{radius}: smallest ratio {dmin:e}"
        )));
    }
    let delta_q = 0.5 * dmin;
    let base = &s - &t * delta_q;
    let ball: Vec<usize> = (0..m).filter(|&i| norm2(grid.node(i)) <= radius * radius).collect();
    let pd = |c: f64| {
        let mut a = base.clone();
        for &i in &ball {
            a[(i, i)] += c;
        }
        is_positive_definite(&a)
    };
    let mut hi = base.diagonal().amax().max(1e-300);
    let mut tries = 0;
    while !pd(hi) {
        hi *= 4.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Numerical("no finite ball constant found".into()));
        }
    }
    let mut lo = 0.0;
    if !pd(0.0) {
        while hi - lo > 1e-3 * hi {
            let mid = 0.5 * (lo + hi);
            if pd(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = 0.0;
    }
    Ok(WeightedCoercivity { weight, radius, delta_q, c: hi })
}
