//! Per-wavevector evolution d/dt f(k) + i v.k f(k) + L f(k) = Gamma_hat(f, f)(k).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionModel;
use crate::error::{Error, Result};
use crate::grid::{MacroCoeffs, VelocityGrid, C64, MU0};
use crate::linalg::lanczos;
use crate::operator::OperatorMatrix;
use crate::par;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KGridMode {
    Radial1d,
    Lattice3d,
}

#[derive(Clone, Debug)]
pub struct KGrid {
    pub mode: KGridMode,
    pub kvecs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Lattice: integer coordinates, half-width and spacing.
    pub ints: Vec<[i32; 3]>,
    pub half: i32,
    pub dk: f64,
    /// Index of -k (lattice) or of k itself (radial).
    pub neg: Vec<usize>,
    pub zero: usize,
}

impl KGrid {
    /// (2 half + 1)^3 wavevectors j dk, j in [-half, half]^3, each with weight dk^3.
    pub fn lattice(half: i32, dk: f64) -> Result<Self> {
        if half < 0 || !(dk > 0.0) {
            return Err(Error::invalid("lattice needs half >= 0 and dk > 0"));
        }
        let n = 2 * half + 1;
        let mut ints = Vec::new();
        for a in -half..=half {
            for b in -half..=half {
                for c in -half..=half {
                    ints.push([a, b, c]);
                }
            }
        }
        let idx = |p: [i32; 3]| (((p[0] + half) * n + p[1] + half) * n + p[2] + half) as usize;
        let neg = ints.iter().map(|p| idx([-p[0], -p[1], -p[2]])).collect();
        let kvecs = ints.iter().map(|p| p.map(|x| x as f64 * dk)).collect();
        let weights = vec![dk * dk * dk; ints.len()];
        Ok(Self { mode: KGridMode::Lattice3d, kvecs, weights, zero: idx([0, 0, 0]), ints, half, dk, neg })
    }

    /// Radial nodes along e3 with weights 4 pi k^2 dk; k = 0 is prepended with weight 0 if absent.
    pub fn radial(rule: &[(f64, f64)]) -> Self {
        let mut pts: Vec<(f64, f64)> = rule.to_vec();
        if !pts.iter().any(|p| p.0 == 0.0) {
            pts.insert(0, (0.0, 0.0));
        }
        let zero = pts.iter().position(|p| p.0 == 0.0).unwrap();
        Self {
            mode: KGridMode::Radial1d,
            kvecs: pts.iter().map(|p| [0.0, 0.0, p.0]).collect(),
            weights: pts.iter().map(|p| p.1).collect(),
            ints: Vec::new(),
            half: 0,
            dk: 0.0,
            neg: (0..pts.len()).collect(),
            zero,
        }
    }

    pub fn len(&self) -> usize {
        self.kvecs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.kvecs.is_empty()
    }

    pub fn index_of(&self, p: [i32; 3]) -> Option<usize> {
        let h = self.half;
        if p.iter().any(|x| x.abs() > h) {
            return None;
        }
        let n = 2 * h + 1;
        Some((((p[0] + h) * n + p[1] + h) * n + p[2] + h) as usize)
    }

    /// Modes whose conjugate partner is not stored separately: k = 0 and the
    /// lexicographically positive half.
    pub fn half_modes(&self) -> Vec<usize> {
        match self.mode {
            KGridMode::Radial1d => (0..self.len()).collect(),
            KGridMode::Lattice3d => (0..self.len()).filter(|&i| i >= self.neg[i]).collect(),
        }
    }

    pub fn kmax(&self) -> f64 {
        self.kvecs.iter().map(|k| crate::grid::norm2(*k).sqrt()).fold(0.0, f64::max)
    }
}

/// |k| / sqrt(1 + |k|^2)
pub fn multiplier(k: [f64; 3]) -> f64 {
    let a = crate::grid::norm2(k).sqrt();
    a / (1.0 + a * a).sqrt()
}

pub fn multiplier_apply(k: [f64; 3], x: C64) -> C64 {
    x * multiplier(k)
}

pub fn multiplier_apply_macro(k: [f64; 3], m: &MacroCoeffs) -> MacroCoeffs {
    m.scale(multiplier(k))
}

/// i (v.k) f
pub fn transport_apply(grid: &VelocityGrid, k: [f64; 3], f: &[C64]) -> Vec<C64> {
    grid.nodes()
        .iter()
        .zip(f)
        .map(|(v, z)| C64::new(0.0, v[0] * k[0] + v[1] * k[1] + v[2] * k[2]) * z)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub t: f64,
    pub modes: usize,
    pub m: usize,
    pub data: Vec<C64>,
}

impl SpectralState {
    pub fn zeros(modes: usize, m: usize) -> Self {
        Self { t: 0.0, modes, m, data: vec![ZERO; modes * m] }
    }
    pub fn mode(&self, i: usize) -> &[C64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }
    pub fn mode_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.m..(i + 1) * self.m]
    }
    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// max_k ||f(-k) - conj f(k)|| / max ||f||.
    pub fn conjugate_defect(&self, kg: &KGrid) -> f64 {
        let mut d = 0.0f64;
        let mut s = 0.0f64;
        for i in 0..self.modes {
            let a = self.mode(i);
            let b = self.mode(kg.neg[i]);
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y.conj()).norm());
                s = s.max(x.norm());
            }
        }
        if s > 0.0 {
            d / s
        } else {
            0.0
        }
    }

    /// Replaces f(-k) by conj f(k) on the negative half and makes f(0) real.
    pub fn enforce_conjugate(&mut self, kg: &KGrid) {
        for i in 0..self.modes {
            let j = kg.neg[i];
            if i == j {
                for z in self.mode_mut(i) {
                    z.im = 0.0;
                }
            } else if i > j {
                let src: Vec<C64> = self.mode(i).iter().map(|z| z.conj()).collect();
                self.mode_mut(j).copy_from_slice(&src);
            }
        }
    }
}

/// Options for the nonlinear term.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GammaHatOptions {
    /// Unordered pairs with mu(u) mu(v) < cutoff * mu(0)^2 are skipped whole.
    pub pair_cutoff: f64,
}

impl Default for GammaHatOptions {
    fn default() -> Self {
        Self { pair_cutoff: 0.0 }
    }
}

/// Truncated convolution sum_l Gamma(f(k-l), g(l)) dk^3 on a lattice.
pub struct GammaHat<'a> {
    model: &'a CollisionModel,
    kgrid: &'a KGrid,
    half: Vec<usize>,
    /// For each half mode: pairs (a, b) with k_a + k_b = k.
    pairs: Vec<Vec<(u16, u16)>>,
    opts: GammaHatOptions,
}

impl<'a> GammaHat<'a> {
    pub fn new(model: &'a CollisionModel, kgrid: &'a KGrid, opts: GammaHatOptions) -> Result<Self> {
        if kgrid.mode != KGridMode::Lattice3d {
            return Err(Error::invalid("the nonlinear term needs a lattice k-grid"));
        }
        let half = kgrid.half_modes();
        let pairs = half
            .iter()
            .map(|&k| {
                let pk = kgrid.ints[k];
                (0..kgrid.len())
                    .filter_map(|b| {
                        let pb = kgrid.ints[b];
                        let a = kgrid.index_of([pk[0] - pb[0], pk[1] - pb[1], pk[2] - pb[2]])?;
                        Some((a as u16, b as u16))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { model, kgrid, half, pairs, opts })
    }

    /// Number of complex multiply-adds of one evaluation, for budget reports.
    pub fn cost_estimate(&self) -> f64 {
        let m = self.model.grid().len() as f64;
        let conv: usize = self.pairs.iter().map(|p| p.len()).sum();
        let nsig = (self.model.rule().n_theta() * self.model.rule().n_phi()) as f64;
        0.5 * m * m * nsig * (conv as f64 + 4.0 * 27.0 * self.half.len() as f64)
    }

    /// Gamma_hat(f, g) for all modes.
    pub fn eval(&self, f: &SpectralState, g: &SpectralState) -> SpectralState {
        let grid = self.model.grid();
        let m = grid.len();
        let n = grid.points_per_axis();
        let nk = self.kgrid.len();
        let nh = self.half.len();
        let sm = grid.sqrt_mu();
        let mu = grid.mu();
        // node-major psi = f / sqrt(mu) over all modes
        let to_psi = |s: &SpectralState| {
            let mut p = vec![ZERO; m * nk];
            for k in 0..nk {
                let fk = s.mode(k);
                for i in 0..m {
                    p[i * nk + k] = fk[i] / sm[i];
                }
            }
            p
        };
        let pf = to_psi(f);
        let pg = to_psi(g);
        let same = std::ptr::eq(f, g);
        let cut = self.opts.pair_cutoff * MU0 * MU0;
        let kg = self.kgrid;

        let interp = |p: &[C64], st: &crate::interp::PointStencil, out: &mut [C64]| {
            out.iter_mut().for_each(|z| *z = ZERO);
            let e = st.entries(n);
            for t in 0..e.len {
                let w = e.w[t];
                let row = &p[e.idx[t] as usize * nk..(e.idx[t] as usize + 1) * nk];
                for (o, z) in out.iter_mut().zip(row) {
                    *o += z * w;
                }
            }
        };
        let conv = |a: &[C64], b: &[C64], out: &mut [C64]| {
            for (h, pl) in self.pairs.iter().enumerate() {
                let mut s = ZERO;
                for &(i, j) in pl {
                    s += a[i as usize] * b[j as usize];
                }
                out[h] = s;
            }
        };
        let scatter = |st: &crate::interp::PointStencil, x: &[C64], acc: &mut [C64]| {
            let e = st.entries(n);
            for t in 0..e.len {
                let w = e.w[t];
                let row = &mut acc[e.idx[t] as usize * nh..(e.idx[t] as usize + 1) * nh];
                for (o, z) in row.iter_mut().zip(x) {
                    *o += z * w;
                }
            }
        };

        struct Work {
            acc: Vec<C64>,
            buf: Vec<(f64, crate::interp::PointStencil, crate::interp::PointStencil)>,
            fa: Vec<C64>,
            gb: Vec<C64>,
            fb: Vec<C64>,
            ga: Vec<C64>,
            post: Vec<C64>,
            post2: Vec<C64>,
            pre: Vec<C64>,
            pre2: Vec<C64>,
            x: Vec<C64>,
            x2: Vec<C64>,
        }
        let make = || Work {
            acc: vec![ZERO; m * nh],
            buf: Vec::new(),
            fa: vec![ZERO; nk],
            gb: vec![ZERO; nk],
            fb: vec![ZERO; nk],
            ga: vec![ZERO; nk],
            post: vec![ZERO; nh],
            post2: vec![ZERO; nh],
            pre: vec![ZERO; nh],
            pre2: vec![ZERO; nh],
            x: vec![ZERO; nh],
            x2: vec![ZERO; nh],
        };
        let work = par::chunked_reduce(
            m,
            make,
            |wk, v| {
                let Work { acc, buf, fa, gb, fb, ga, post, post2, pre, pre2, x, x2 } = wk;
                let keep = |u: usize| mu[u] * mu[v] >= cut;
                self.model.visit_pairs(v, keep, buf, |u, colls| {
                    // ordering (v, u): first argument at u, second at v
                    conv(&pf[u * nk..(u + 1) * nk], &pg[v * nk..(v + 1) * nk], pre);
                    if !same {
                        conv(&pf[v * nk..(v + 1) * nk], &pg[u * nk..(u + 1) * nk], pre2);
                    }
                    for (wt, sv, su) in colls.iter() {
                        let c = -0.5 * wt * mu[u] * mu[v];
                        interp(&pf, su, fa);
                        interp(&pg, sv, gb);
                        conv(fa, gb, post);
                        if same {
                            for h in 0..nh {
                                x[h] = (post[h] - pre[h]) * c;
                            }
                            scatter(sv, x, acc);
                            scatter(su, x, acc);
                            let (av, au) = (v * nh, u * nh);
                            for h in 0..nh {
                                acc[av + h] -= x[h];
                                acc[au + h] -= x[h];
                            }
                        } else {
                            interp(&pf, sv, fb);
                            interp(&pg, su, ga);
                            conv(fb, ga, post2);
                            for h in 0..nh {
                                x[h] = (post[h] - pre[h]) * c;
                                x2[h] = (post2[h] - pre2[h]) * c;
                            }
                            scatter(sv, x, acc);
                            scatter(su, x2, acc);
                            let (av, au) = (v * nh, u * nh);
                            for h in 0..nh {
                                acc[av + h] -= x[h];
                                acc[au + h] -= x2[h];
                            }
                        }
                    }
                });
            },
            |a, b| {
                for (x, y) in a.acc.iter_mut().zip(&b.acc) {
                    *x += y;
                }
            },
        );
        let w = grid.weight();
        let mut out = SpectralState::zeros(nk, m);
        out.t = f.t;
        for (h, &k) in self.half.iter().enumerate() {
            let wk = kg.weights[k];
            let j = kg.neg[k];
            for i in 0..m {
                let z = work.acc[i * nh + h] * (wk / (w * sm[i]));
                out.data[k * m + i] = z;
                if j != k {
                    out.data[j * m + i] = z.conj();
                }
            }
        }
        out
    }
}

/// Linear operator of one mode: A_k = i diag(v.k) + L.
pub fn mode_matrix(grid: &VelocityGrid, l: &OperatorMatrix, k: [f64; 3]) -> DMatrix<C64> {
    let m = grid.len();
    let nodes = grid.nodes();
    DMatrix::from_fn(m, m, |i, j| {
        let mut z = C64::new(l.get(i, j), 0.0);
        if i == j {
            let v = nodes[i];
            z.im += v[0] * k[0] + v[1] * k[1] + v[2] * k[2];
        }
        z
    })
}

fn apply_linear(grid: &VelocityGrid, l: &OperatorMatrix, k: [f64; 3], f: &[C64], out: &mut [C64]) {
    l.apply_into(f, out);
    for ((o, z), v) in out.iter_mut().zip(f).zip(grid.nodes()) {
        *o += C64::new(0.0, v[0] * k[0] + v[1] * k[1] + v[2] * k[2]) * z;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Rk4,
    CrankNicolson,
}

/// Upper bound for the spectral radius of i v.k + L over the grid's wavevectors.
pub fn spectral_radius_bound(grid: &VelocityGrid, l: &OperatorMatrix, kmax: f64) -> f64 {
    let r = lanczos(l.n, 40, 17, |x| {
        let y = l.apply_real(x.as_slice());
        DVector::from_vec(y)
    });
    let lmax = r.values.last().unwrap().abs().max(r.values[0].abs());
    let vmax = grid.nodes().iter().map(|v| crate::grid::norm2(*v).sqrt()).fold(0.0, f64::max);
    lmax + kmax * vmax
}

/// Largest stable RK4 step with the given safety factor (RK4 reaches about 2.78
/// on both the negative real and the imaginary axis).
pub fn rk4_max_step(rho: f64, safety: f64) -> f64 {
    safety * 2.78 / rho
}

pub struct Stepper<'a> {
    grid: &'a VelocityGrid,
    l: &'a OperatorMatrix,
    kgrid: &'a KGrid,
    pub dt: f64,
    pub integrator: Integrator,
    pub with_l: bool,
    lu: Vec<Option<nalgebra::linalg::LU<C64, nalgebra::Dyn, nalgebra::Dyn>>>,
    half: Vec<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a VelocityGrid,
        l: &'a OperatorMatrix,
        kgrid: &'a KGrid,
        dt: f64,
        integrator: Integrator,
        with_l: bool,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        let half = kgrid.half_modes();
        let mut lu: Vec<Option<_>> = (0..kgrid.len()).map(|_| None).collect();
        if integrator == Integrator::CrankNicolson {
            let facs = par::map(half.len(), |h| {
                let k = kgrid.kvecs[half[h]];
                let mut a = if with_l {
                    mode_matrix(grid, l, k)
                } else {
                    let mut z = DMatrix::zeros(grid.len(), grid.len());
                    for (i, v) in grid.nodes().iter().enumerate() {
                        z[(i, i)] = C64::new(0.0, v[0] * k[0] + v[1] * k[1] + v[2] * k[2]);
                    }
                    z
                };
                a *= C64::new(0.5 * dt, 0.0);
                for i in 0..grid.len() {
                    a[(i, i)] += C64::new(1.0, 0.0);
                }
                a.lu()
            });
            for (h, f) in facs.into_iter().enumerate() {
                lu[half[h]] = Some(f);
            }
        }
        Ok(Self { grid, l, kgrid, dt, integrator, with_l, lu, half })
    }

    fn op(&self, k: [f64; 3], f: &[C64], out: &mut [C64]) {
        if self.with_l {
            apply_linear(self.grid, self.l, k, f, out);
        } else {
            for ((o, z), v) in out.iter_mut().zip(f).zip(self.grid.nodes()) {
                *o = C64::new(0.0, v[0] * k[0] + v[1] * k[1] + v[2] * k[2]) * z;
            }
        }
    }

    fn step_mode(&self, k: usize, f: &[C64], src: Option<&[C64]>) -> Vec<C64> {
        let m = f.len();
        let kv = self.kgrid.kvecs[k];
        let dt = self.dt;
        match self.integrator {
            Integrator::Rk4 => {
                let rhs = |x: &[C64], out: &mut [C64]| {
                    self.op(kv, x, out);
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = -*o + src.map_or(ZERO, |s| s[i]);
                    }
                };
                let mut k1 = vec![ZERO; m];
                let mut k2 = vec![ZERO; m];
                let mut k3 = vec![ZERO; m];
                let mut k4 = vec![ZERO; m];
                let mut tmp = vec![ZERO; m];
                rhs(f, &mut k1);
                for i in 0..m {
                    tmp[i] = f[i] + k1[i] * (0.5 * dt);
                }
                rhs(&tmp, &mut k2);
                for i in 0..m {
                    tmp[i] = f[i] + k2[i] * (0.5 * dt);
                }
                rhs(&tmp, &mut k3);
                for i in 0..m {
                    tmp[i] = f[i] + k3[i] * dt;
                }
                rhs(&tmp, &mut k4);
                (0..m)
                    .map(|i| f[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
                    .collect()
            }
            Integrator::CrankNicolson => {
                let mut af = vec![ZERO; m];
                self.op(kv, f, &mut af);
                let b = DVector::from_iterator(
                    m,
                    (0..m).map(|i| f[i] - af[i] * (0.5 * dt) + src.map_or(ZERO, |s| s[i] * dt)),
                );
                let lu = self.lu[k].as_ref().expect("factorisation prepared for half modes");
                lu.solve(&b).expect("Crank-Nicolson system is nonsingular").as_slice().to_vec()
            }
        }
    }

    /// -(i v.k + L) f + source, mode by mode.
    pub fn rhs(&self, state: &SpectralState, source: &SpectralState) -> SpectralState {
        let m = state.m;
        let outs = par::map(state.modes, |k| {
            let mut o = vec![ZERO; m];
            self.op(self.kgrid.kvecs[k], state.mode(k), &mut o);
            for (x, s) in o.iter_mut().zip(source.mode(k)) {
                *x = s - *x;
            }
            o
        });
        let mut out = SpectralState::zeros(state.modes, m);
        out.t = state.t;
        for (k, o) in outs.into_iter().enumerate() {
            out.mode_mut(k).copy_from_slice(&o);
        }
        out
    }

    /// Advances every mode by dt; `source` is an explicit forcing (e.g. Gamma_hat).
    pub fn step(&self, state: &SpectralState, source: Option<&SpectralState>) -> Result<SpectralState> {
        let m = state.m;
        let modes: Vec<usize> = match self.integrator {
            Integrator::CrankNicolson => self.half.clone(),
            Integrator::Rk4 => (0..state.modes).collect(),
        };
        let outs = par::map(modes.len(), |h| {
            let k = modes[h];
            self.step_mode(k, state.mode(k), source.map(|s| s.mode(k)))
        });
        let mut next = SpectralState::zeros(state.modes, m);
        next.t = state.t + self.dt;
        for (h, out) in outs.into_iter().enumerate() {
            let k = modes[h];
            if let Some(i) = out.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite value in mode {k} at velocity node {i}, t = {}",
                    next.t
                )));
            }
            next.mode_mut(k).copy_from_slice(&out);
            if self.integrator == Integrator::CrankNicolson {
                let j = self.kgrid.neg[k];
                if j != k {
                    let c: Vec<C64> = out.iter().map(|z| z.conj()).collect();
                    next.mode_mut(j).copy_from_slice(&c);
                }
            }
        }
        Ok(next)
    }
}

/// Quasi-random (Halton) point in the periodic cell of the lattice.
fn halton(i: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, i + 1);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PositivityReport {
    pub t: f64,
    pub samples: usize,
    pub min_f: f64,
    pub argmin_x: [f64; 3],
    pub argmin_v: [f64; 3],
}

/// Samples F = mu + sqrt(mu) f(x, v) with f(x) = sum_k f(k) e^{i k.x} dk^3.
pub fn reconstruct_positivity(
    state: &SpectralState,
    grid: &VelocityGrid,
    kgrid: &KGrid,
    samples: usize,
) -> PositivityReport {
    let period = if kgrid.dk > 0.0 { 2.0 * std::f64::consts::PI / kgrid.dk } else { 1.0 };
    let mu = grid.mu();
    let sm = grid.sqrt_mu();
    let per = par::map(samples, |s| {
        let x = [halton(s, 2), halton(s, 3), halton(s, 5)].map(|h| (h - 0.5) * period);
        let phases: Vec<C64> = kgrid
            .kvecs
            .iter()
            .zip(&kgrid.weights)
            .map(|(k, w)| C64::from_polar(*w, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]))
            .collect();
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..grid.len() {
            let mut f = 0.0;
            for (k, ph) in phases.iter().enumerate() {
                f += (state.data[k * state.m + i] * ph).re;
            }
            let big_f = mu[i] + sm[i] * f;
            if big_f < best.0 {
                best = (big_f, i);
            }
        }
        (best.0, best.1, x)
    });
    let (min_f, iv, x) = per
        .into_iter()
        .fold((f64::INFINITY, 0, [0.0; 3]), |a, b| if b.0 < a.0 { b } else { a });
    PositivityReport { t: state.t, samples, min_f, argmin_x: x, argmin_v: grid.node(iv) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::KernelSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(kg: &KGrid, m: usize, seed: u64, sm: &[f64]) -> SpectralState {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SpectralState::zeros(kg.len(), m);
        for z in s.data.iter_mut().enumerate() {
            let i = z.0 % m;
            *z.1 = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)) * sm[i];
        }
        s.enforce_conjugate(kg);
        s
    }

    #[test]
    fn lattice_layout() {
        let kg = KGrid::lattice(2, 0.5).unwrap();
        assert_eq!(kg.len(), 125);
        assert_eq!(kg.kvecs[kg.zero], [0.0; 3]);
        for i in 0..kg.len() {
            let (a, b) = (kg.kvecs[i], kg.kvecs[kg.neg[i]]);
            assert_eq!(a.map(|x| -x), b);
        }
        assert_eq!(kg.half_modes().len(), 63);
    }

    #[test]
    fn multiplier_values() {
        assert_eq!(multiplier([0.0; 3]), 0.0);
        assert!((multiplier([1.0, 0.0, 0.0]) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(1.0 - multiplier([1e3, 0.0, 0.0]) < 5e-7);
    }

    #[test]
    fn transport_is_skew() {
        let g = VelocityGrid::new(6.0, 6).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<C64> = (0..g.len()).map(|_| C64::new(r.gen(), r.gen())).collect();
        let tf = transport_apply(&g, [0.3, -0.2, 1.1], &f);
        assert!(g.inner(&f, &tf).re.abs() < 1e-12);
        assert!(transport_apply(&g, [0.0; 3], &f).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn gamma_hat_two_modes_and_symmetry() {
        let g = VelocityGrid::new(6.0, 6).unwrap();
        let cm = CollisionModel::new(g.clone(), KernelSpec::hard(), 2, 4).unwrap();
        let kg = KGrid::lattice(1, 0.7).unwrap();
        let gh = GammaHat::new(&cm, &kg, GammaHatOptions::default()).unwrap();
        let m = g.len();
        let sm = g.sqrt_mu();
        // f supported on k1 = e1 and k2 = e2 together with their conjugates
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let f1: Vec<C64> = (0..m).map(|i| C64::new(r.gen(), r.gen()) * sm[i]).collect();
        let f2: Vec<C64> = (0..m).map(|i| C64::new(r.gen(), r.gen()) * sm[i]).collect();
        let i1 = kg.index_of([1, 0, 0]).unwrap();
        let i2 = kg.index_of([0, 1, 0]).unwrap();
        let mut s = SpectralState::zeros(kg.len(), m);
        s.mode_mut(i1).copy_from_slice(&f1);
        s.mode_mut(i2).copy_from_slice(&f2);
        s.enforce_conjugate(&kg);
        let out = gh.eval(&s, &s);
        let i12 = kg.index_of([1, 1, 0]).unwrap();
        let a = cm.gamma_eval(&f1, &f2);
        let b = cm.gamma_eval(&f2, &f1);
        let w = kg.weights[0];
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * w;
        for i in 0..m {
            let want = (a[i] + b[i]) * w;
            assert!((out.mode(i12)[i] - want).norm() <= 1e-11 * scale);
        }
        assert!(out.conjugate_defect(&kg) < 1e-12);
        // output supported only on sums of input supports
        let i20 = kg.index_of([1, -1, 0]).unwrap();
        assert!(out.mode(i20).iter().any(|z| z.norm() > 0.0));
        let off = kg.index_of([0, 0, 1]).unwrap();
        assert!(out.mode(off).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_mode_doubles_frequency() {
        let g = VelocityGrid::new(6.0, 6).unwrap();
        let cm = CollisionModel::new(g.clone(), KernelSpec::hard(), 2, 4).unwrap();
        let kg = KGrid::lattice(2, 0.7).unwrap();
        let gh = GammaHat::new(&cm, &kg, GammaHatOptions::default()).unwrap();
        let m = g.len();
        let mut s = SpectralState::zeros(kg.len(), m);
        let i1 = kg.index_of([1, 0, 0]).unwrap();
        for (z, sm) in s.mode_mut(i1).iter_mut().zip(g.sqrt_mu()) {
            *z = C64::new(1.0, 0.5) * *sm;
        }
        let out = gh.eval(&s, &s);
        for k in 0..kg.len() {
            let nz = out.mode(k).iter().any(|z| z.norm() > 0.0);
            let want = kg.ints[k] == [2, 0, 0] || kg.ints[k] == [-2, 0, 0];
            assert_eq!(nz, want, "mode {:?}", kg.ints[k]);
        }
        let _ = random_state(&kg, m, 1, g.sqrt_mu());
    }

    #[test]
    fn transport_only_matches_exact_phase() {
        let g = VelocityGrid::new(6.0, 6).unwrap();
        let l = OperatorMatrix::new(crate::operator::OperatorKind::L, g.len(), g.weight(), vec![0.0; g.len() * g.len()]);
        let kg = KGrid::lattice(1, 0.4).unwrap();
        let s0 = random_state(&kg, g.len(), 2, g.sqrt_mu());
        let rho = spectral_radius_bound(&g, &l, kg.kmax());
        let dt = rk4_max_step(rho, 0.05);
        let rk = Stepper::new(&g, &l, &kg, dt, Integrator::Rk4, false).unwrap();
        let fine = Stepper::new(&g, &l, &kg, 0.004, Integrator::Rk4, false).unwrap();
        let mut c = s0.clone();
        for _ in 0..2500 {
            c = fine.step(&c, None).unwrap();
        }
        let cn = Stepper::new(&g, &l, &kg, 0.3, Integrator::CrankNicolson, false).unwrap();
        let (mut a, mut b) = (s0.clone(), s0.clone());
        while a.t < 2.0 {
            a = rk.step(&a, None).unwrap();
        }
        for _ in 0..20 {
            b = cn.step(&b, None).unwrap();
        }
        for k in 0..kg.len() {
            let n0 = g.norm(s0.mode(k));
            assert!((g.norm(b.mode(k)) - n0).abs() <= 1e-12 * n0);
            assert!((g.norm(c.mode(k)) - n0).abs() <= 1e-8 * n0);
            let kv = kg.kvecs[k];
            for (i, v) in g.nodes().iter().enumerate() {
                let ph = C64::from_polar(1.0, -(v[0] * kv[0] + v[1] * kv[1] + v[2] * kv[2]) * a.t);
                assert!((a.mode(k)[i] - s0.mode(k)[i] * ph).norm() < 1e-4 * n0);
            }
        }
        assert!(b.conjugate_defect(&kg) < 1e-14);
    }

    #[test]
    fn zero_state_positivity_is_min_mu() {
        let g = VelocityGrid::new(6.0, 6).unwrap();
        let kg = KGrid::lattice(1, 0.5).unwrap();
        let s = SpectralState::zeros(kg.len(), g.len());
        let r = reconstruct_positivity(&s, &g, &kg, 16);
        let mmin = g.mu().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.min_f, mmin);
    }
}
