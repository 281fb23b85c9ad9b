//! Velocity lattice, Maxwellian and weight fields, the macroscopic projection
//! onto the collision invariants, and the higher-order moments.

use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// (2π)^{-3/2}
pub const MU0: f64 = 0.063_493_635_934_240_97;

#[inline]
pub fn maxwellian(v: [f64; 3]) -> f64 {
    MU0 * (-0.5 * norm2(v)).exp()
}

#[inline]
pub fn norm2(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Uniform midpoint lattice on [-V, V]^3 with `n` nodes per axis, stored
/// row-major over (v1, v2, v3).
#[derive(Clone, Debug)]
pub struct VelocityGrid {
    extent: f64,
    n: usize,
    h: f64,
    axis: Vec<f64>,
    nodes: Vec<[f64; 3]>,
    mu: Vec<f64>,
    sqrt_mu: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(extent: f64, n: usize) -> Result<Self> {
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::invalid(format!("grid extent must be positive, got {extent}")));
        }
        if n < 4 {
            return Err(Error::invalid(format!(
                "points_per_axis must be at least 4, got {n}"
            )));
        }
        let h = 2.0 * extent / n as f64;
        // Built from the left half and mirrored so that x[n-1-i] == -x[i] bit for bit.
        let mut axis = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let x = -extent + (i as f64 + 0.5) * h;
            axis[i] = x;
            axis[n - 1 - i] = -x;
        }
        if n % 2 == 1 {
            axis[n / 2] = 0.0;
        }
        let mut nodes = Vec::with_capacity(n * n * n);
        for &a in &axis {
            for &b in &axis {
                for &c in &axis {
                    nodes.push([a, b, c]);
                }
            }
        }
        let mu: Vec<f64> = nodes.iter().map(|&v| maxwellian(v)).collect();
        let sqrt_mu = mu.iter().map(|m| m.sqrt()).collect();
        Ok(Self { extent, n, h, axis, nodes, mu, sqrt_mu })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn points_per_axis(&self) -> usize {
        self.n
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    /// Quadrature weight of every node, (2V/N)^3.
    pub fn weight(&self) -> f64 {
        self.h * self.h * self.h
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }
    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }
    pub fn node(&self, i: usize) -> [f64; 3] {
        self.nodes[i]
    }
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn sqrt_mu(&self) -> &[f64] {
        &self.sqrt_mu
    }
    /// Index of the node -v.
    pub fn mirror(&self, idx: usize) -> usize {
        let [i, j, k] = self.multi_index(idx);
        let m = self.n - 1;
        self.index(m - i, m - j, m - k)
    }

    /// Short content hash used to key cached matrices.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.extent.to_le_bytes());
        h.update((self.n as u64).to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }

    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        let s: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        s * self.weight()
    }

    pub fn norm(&self, f: &[C64]) -> f64 {
        (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.weight()).sqrt()
    }

    pub fn norm_real(&self, f: &[f64]) -> f64 {
        (f.iter().map(|z| z * z).sum::<f64>() * self.weight()).sqrt()
    }

    /// Discrete (phi, f) with a real test field.
    pub fn moment(&self, phi: &[f64], f: &[C64]) -> C64 {
        let s: C64 = phi.iter().zip(f).map(|(p, z)| z * *p).sum();
        s * self.weight()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.weight()
    }

    pub fn field(&self, mut f: impl FnMut([f64; 3]) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&v| f(v)).collect()
    }
}

pub fn maxwellian_field(grid: &VelocityGrid) -> Vec<f64> {
    grid.mu().to_vec()
}

pub fn to_complex(f: &[f64]) -> Vec<C64> {
    f.iter().map(|&x| C64::new(x, 0.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub ell: f64,
    pub q: f64,
    /// gamma + 2s, copied from the kernel.
    pub gamma2s: f64,
}

impl WeightSpec {
    pub fn new(ell: f64, q: f64, gamma2s: f64) -> Result<Self> {
        if !(ell >= 0.0 && q >= 0.0) {
            return Err(Error::invalid(format!(
                "weight exponents must be nonnegative, got ell={ell}, q={q}"
            )));
        }
        Ok(Self { ell, q, gamma2s })
    }

    pub fn unit() -> Self {
        Self { ell: 0.0, q: 0.0, gamma2s: 0.0 }
    }

    pub fn is_unit(&self) -> bool {
        self.ell == 0.0 && self.q == 0.0
    }

    pub fn eval(&self, v: [f64; 3]) -> f64 {
        let br = (1.0 + norm2(v)).sqrt();
        let mut w = 1.0;
        if self.ell > 0.0 {
            w *= br.powf(self.ell * self.gamma2s.abs());
        }
        if self.q > 0.0 {
            w *= (self.q * br / 4.0).exp();
        }
        w
    }

    pub fn field(&self, grid: &VelocityGrid) -> Vec<f64> {
        grid.field(|v| self.eval(v))
    }
}

pub fn weight_eval(w: &WeightSpec, v: [f64; 3]) -> f64 {
    w.eval(v)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroCoeffs {
    pub a: C64,
    pub b: [C64; 3],
    pub c: C64,
}

impl MacroCoeffs {
    pub fn abs(&self) -> f64 {
        (self.a.norm_sqr()
            + self.b.iter().map(|z| z.norm_sqr()).sum::<f64>()
            + self.c.norm_sqr())
        .sqrt()
    }

    pub fn conj(&self) -> Self {
        Self {
            a: self.a.conj(),
            b: [self.b[0].conj(), self.b[1].conj(), self.b[2].conj()],
            c: self.c.conj(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { a: self.a * s, b: self.b.map(|z| z * s), c: self.c * s }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub theta: [[C64; 3]; 3],
    pub lambda: [C64; 3],
}

/// The five invariant fields sqrt(mu), v_j sqrt(mu), (|v|^2-3) sqrt(mu), with
/// their discrete Gram matrix.
#[derive(Clone, Debug)]
pub struct Projector {
    basis: [Vec<f64>; 5],
    gram_inv: Matrix5<f64>,
    condition: f64,
}

/// Above this the five basis fields are numerically dependent on the grid.
pub const MAX_GRAM_CONDITION: f64 = 1e10;

impl Projector {
    pub fn new(grid: &VelocityGrid) -> Result<Self> {
        let sm = grid.sqrt_mu();
        let nodes = grid.nodes();
        let mk = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..grid.len()).map(f).collect() };
        let basis = [
            mk(&|i| sm[i]),
            mk(&|i| nodes[i][0] * sm[i]),
            mk(&|i| nodes[i][1] * sm[i]),
            mk(&|i| nodes[i][2] * sm[i]),
            mk(&|i| (norm2(nodes[i]) - 3.0) * sm[i]),
        ];
        let w = grid.weight();
        let mut g = Matrix5::zeros();
        for a in 0..5 {
            for b in 0..5 {
                g[(a, b)] = basis[a].iter().zip(&basis[b]).map(|(x, y)| x * y).sum::<f64>() * w;
            }
        }
        let eig = SymmetricEigen::new(g).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::MAX, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_GRAM_CONDITION {
            return Err(Error::Numerical(format!(
                "degenerate invariant Gram matrix (condition number {condition:.3e}); grid too coarse"
            )));
        }
        let gram_inv = g.try_inverse().ok_or_else(|| {
            Error::Numerical("invariant Gram matrix is singular".into())
        })?;
        Ok(Self { basis, gram_inv, condition })
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn basis(&self) -> &[Vec<f64>; 5] {
        &self.basis
    }

    pub fn coeffs(&self, grid: &VelocityGrid, f: &[C64]) -> MacroCoeffs {
        let mut re = Vector5::zeros();
        let mut im = Vector5::zeros();
        for a in 0..5 {
            let m = grid.moment(&self.basis[a], f);
            re[a] = m.re;
            im[a] = m.im;
        }
        let cr = self.gram_inv * re;
        let ci = self.gram_inv * im;
        let z = |a: usize| C64::new(cr[a], ci[a]);
        MacroCoeffs { a: z(0), b: [z(1), z(2), z(3)], c: z(4) }
    }

    pub fn field(&self, m: &MacroCoeffs) -> Vec<C64> {
        let cs = [m.a, m.b[0], m.b[1], m.b[2], m.c];
        (0..self.basis[0].len())
            .map(|i| (0..5).map(|a| cs[a] * self.basis[a][i]).sum())
            .collect()
    }

    /// Returns (coefficients, Pf, (I-P)f).
    pub fn split(&self, grid: &VelocityGrid, f: &[C64]) -> (MacroCoeffs, Vec<C64>, Vec<C64>) {
        let m = self.coeffs(grid, f);
        let pf = self.field(&m);
        let micro = f.iter().zip(&pf).map(|(x, y)| x - y).collect();
        (m, pf, micro)
    }

    pub fn micro(&self, grid: &VelocityGrid, f: &[C64]) -> Vec<C64> {
        self.split(grid, f).2
    }
}

pub fn project_p(grid: &VelocityGrid, f: &[C64]) -> Result<(MacroCoeffs, Vec<C64>, Vec<C64>)> {
    Ok(Projector::new(grid)?.split(grid, f))
}

/// Theta_jm = ((v_j v_m - 1) sqrt(mu), f), Lambda_j = ((|v|^2-5) v_j sqrt(mu), f)/10.
pub fn theta_lambda_moments(grid: &VelocityGrid, f: &[C64]) -> MomentSet {
    let sm = grid.sqrt_mu();
    let mut theta = [[C64::new(0.0, 0.0); 3]; 3];
    let mut lambda = [C64::new(0.0, 0.0); 3];
    for (i, (&v, z)) in grid.nodes().iter().zip(f).enumerate() {
        let s = z * sm[i];
        let r = norm2(v) - 5.0;
        for j in 0..3 {
            for m in j..3 {
                let d = if j == m { 1.0 } else { 0.0 };
                theta[j][m] += s * (v[j] * v[m] - d);
            }
            lambda[j] += s * (r * v[j]);
        }
    }
    let w = grid.weight();
    for j in 0..3 {
        for m in j..3 {
            theta[j][m] *= w;
            theta[m][j] = theta[j][m];
        }
        lambda[j] *= w / 10.0;
    }
    MomentSet { theta, lambda }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn axis_is_mirror_symmetric() {
        for n in [4, 7, 12] {
            let g = VelocityGrid::new(6.0, n).unwrap();
            for i in 0..n {
                assert_eq!(g.axis()[i], -g.axis()[n - 1 - i]);
            }
            assert_relative_eq!(g.weight() * g.len() as f64, 1728.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn mu_at_origin_and_mass() {
        assert_relative_eq!(maxwellian([0.0; 3]), 0.0634936359342410, epsilon = 1e-15);
        let g = VelocityGrid::new(6.0, 16).unwrap();
        // midpoint rule on a Gaussian converges spectrally
        assert!((g.integrate(g.mu()) - 1.0).abs() < 1e-6);
        for i in 0..g.len() {
            assert_eq!(g.mu()[i], g.mu()[g.mirror(i)]);
        }
    }

    #[test]
    fn weight_branches() {
        let w = WeightSpec::new(0.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(w.eval([0.0; 3]), 0.25f64.exp(), epsilon = 1e-15);
        let w = WeightSpec::new(1.0, 0.0, -0.5).unwrap();
        assert_relative_eq!(w.eval([1.0, 1.0, 1.0]), 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(WeightSpec::unit().eval([3.0, -2.0, 1.0]), 1.0);
        assert!(WeightSpec::new(-1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn projection_of_basis_elements() {
        let g = VelocityGrid::new(6.0, 12).unwrap();
        let p = Projector::new(&g).unwrap();
        let f = to_complex(&p.basis()[0]);
        let (m, _, micro) = p.split(&g, &f);
        assert_relative_eq!(m.a.re, 1.0, epsilon = 1e-12);
        assert!(m.b.iter().all(|z| z.norm() < 1e-12) && m.c.norm() < 1e-12);
        assert!(g.norm(&micro) < 1e-12);
        let m = p.coeffs(&g, &to_complex(&p.basis()[1]));
        assert_relative_eq!(m.b[0].re, 1.0, epsilon = 1e-12);
        let m = p.coeffs(&g, &to_complex(&p.basis()[4]));
        assert_relative_eq!(m.c.re, 1.0, epsilon = 1e-12);
        assert!(m.a.norm() < 1e-12);
    }

    #[test]
    fn coarse_grid_reports_condition() {
        // four nodes over a huge box leave almost no mass on the lattice
        let g = VelocityGrid::new(60.0, 4).unwrap();
        match Projector::new(&g) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("condition")),
            other => panic!("expected failure, got {:?}", other.map(|p| p.condition_number())),
        }
    }

    #[test]
    fn moments_of_maxwellian_vanish() {
        // midpoint aliasing at h = 1 is about 1e-7
        let g = VelocityGrid::new(6.0, 12).unwrap();
        let f = to_complex(g.sqrt_mu());
        let m = theta_lambda_moments(&g, &f);
        for j in 0..3 {
            assert!(m.lambda[j].norm() < 1e-6);
            for k in 0..3 {
                assert!(m.theta[j][k].norm() < 1e-6);
            }
        }
    }
}
