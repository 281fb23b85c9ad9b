//! Collision quadrature: Q, Gamma, the linearized operator and the
//! dissipation form, all driven by one enumeration of discrete collisions.
//!
//! A discrete collision is a triple (v, u, sigma) of two grid nodes and an
//! angular node. Post-collision values are read through quadratic stencils;
//! a collision whose v' or u' leaves the node hull is dropped everywhere, which
//! keeps the weak form exactly conservative.

use std::ops::{Add, AddAssign, Mul, Sub};

use crate::error::{Error, Result};
use crate::grid::{maxwellian, VelocityGrid, C64};
use crate::interp::{Interpolator, PointStencil};
use crate::operator::{OperatorKind, OperatorMatrix, Provenance};
use crate::par;
use crate::sphere::{AngularRule, KernelSpec};
use crate::symmetry::GridSymmetry;

pub const DEFAULT_N_THETA: usize = 6;
pub const DEFAULT_N_PHI: usize = 12;
pub const DEFAULT_MAX_BYTES: u64 = 4 << 30;

pub trait Scalar:
    Copy
    + Default
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + 'static
{
}
impl Scalar for f64 {}
impl Scalar for C64 {}

#[inline]
pub fn stencil_eval<T: Scalar>(st: &PointStencil, f: &[T], n: usize) -> T {
    let [a, b, c] = &st.axes;
    let mut s = T::default();
    for i in 0..a.len as usize {
        let ri = (a.start as usize + i) * n;
        let mut sj = T::default();
        for j in 0..b.len as usize {
            let rj = (ri + b.start as usize + j) * n + c.start as usize;
            let mut sk = T::default();
            for k in 0..c.len as usize {
                sk += f[rj + k] * c.w[k];
            }
            sj += sk * b.w[j];
        }
        s += sj * a.w[i];
    }
    s
}

#[inline]
fn stencil_scatter<T: Scalar>(st: &PointStencil, x: T, out: &mut [T], n: usize) {
    let [a, b, c] = &st.axes;
    for i in 0..a.len as usize {
        let ri = (a.start as usize + i) * n;
        let xi = x * a.w[i];
        for j in 0..b.len as usize {
            let rj = (ri + b.start as usize + j) * n + c.start as usize;
            let xj = xi * b.w[j];
            for k in 0..c.len as usize {
                out[rj + k] += xj * c.w[k];
            }
        }
    }
}

/// Which argument of the trilinear form (Gamma(f, g), h) to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    F,
    G,
    H,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssemblyMode {
    /// Orbit representatives plus the 48-element group sum.
    Symmetric,
    /// Every row, for cross-checking.
    Direct,
}

#[derive(Clone, Debug)]
pub struct Assembled {
    pub l: OperatorMatrix,
    pub l1: OperatorMatrix,
    pub l2: OperatorMatrix,
    pub dgram: OperatorMatrix,
    /// ||L_sym - L_raw|| / ||L_raw||
    pub symmetry_defect: f64,
    /// ||L - (L1 + L2)|| / ||L||
    pub split_defect: f64,
}

pub struct CollisionModel {
    grid: VelocityGrid,
    rule: AngularRule,
    interp: Interpolator,
    ints: Vec<[i32; 3]>,
    /// (h |d|)^gamma indexed by |d|^2
    rel_pow: Vec<f64>,
    max_bytes: u64,
}

impl CollisionModel {
    pub fn new(grid: VelocityGrid, spec: KernelSpec, n_theta: usize, n_phi: usize) -> Result<Self> {
        let mut rule = AngularRule::new(spec, n_theta, n_phi)?;
        let n = grid.points_per_axis();
        rule.prepare_lattice(n as i32);
        let interp = Interpolator::new(&grid);
        let ints = (0..grid.len()).map(|i| grid.multi_index(i).map(|x| x as i32)).collect();
        let h = grid.spacing();
        let max_d2 = 3 * (n - 1) * (n - 1);
        let rel_pow = (0..=max_d2)
            .map(|d2| if d2 == 0 { 0.0 } else { (h * (d2 as f64).sqrt()).powf(spec.gamma) })
            .collect();
        Ok(Self { grid, rule, interp, ints, rel_pow, max_bytes: DEFAULT_MAX_BYTES })
    }

    pub fn with_defaults(grid: VelocityGrid, spec: KernelSpec) -> Result<Self> {
        Self::new(grid, spec, DEFAULT_N_THETA, DEFAULT_N_PHI)
    }

    pub fn set_max_bytes(&mut self, b: u64) {
        self.max_bytes = b;
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }
    pub fn spec(&self) -> &KernelSpec {
        self.rule.spec()
    }
    pub fn rule(&self) -> &AngularRule {
        &self.rule
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            spec: *self.spec(),
            grid_hash: self.grid.hash(),
            extent: self.grid.extent(),
            points_per_axis: self.grid.points_per_axis(),
            n_theta: self.rule.n_theta(),
            n_phi: self.rule.n_phi(),
        }
    }

    /// Number of (v, u, sigma) triples visited by a full sweep.
    pub fn collision_count(&self) -> u64 {
        let m = self.grid.len() as u64;
        m * (m - 1) * (self.rule.n_theta() * self.rule.n_phi()) as u64
    }

    /// Calls `f(u, W, v', u')` for every kept collision with first node v,
    /// where W = h^6 |v-u|^gamma * (angular weight).
    #[inline]
    pub fn visit_row(&self, v: usize, mut f: impl FnMut(usize, f64, &PointStencil, &PointStencil)) {
        let g = &self.grid;
        let h = g.spacing();
        let w2 = g.weight() * g.weight();
        let iv = self.ints[v];
        let xv = g.node(v);
        for (u, iu) in self.ints.iter().enumerate() {
            if u == v {
                continue;
            }
            let d = [iv[0] - iu[0], iv[1] - iu[1], iv[2] - iu[2]];
            let d2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as usize;
            let base = w2 * self.rel_pow[d2];
            if base == 0.0 {
                continue;
            }
            let xu = g.node(u);
            let mid = [0.5 * (xv[0] + xu[0]), 0.5 * (xv[1] + xu[1]), 0.5 * (xv[2] + xu[2])];
            let r = 0.5 * h * (d2 as f64).sqrt();
            let (nodes, gi) = self.rule.lattice_rule(d);
            for &(sc, ws) in nodes {
                let s = gi.apply(sc);
                let vp = [mid[0] + r * s[0], mid[1] + r * s[1], mid[2] + r * s[2]];
                let Some(sv) = self.interp.stencil(vp) else { continue };
                let up = [mid[0] - r * s[0], mid[1] - r * s[1], mid[2] - r * s[2]];
                let Some(su) = self.interp.stencil(up) else { continue };
                f(u, base * ws, &sv, &su);
            }
        }
    }

    /// Unordered pairs u < v accepted by `keep`: calls `f(u, collisions)` with
    /// all kept (W, v', u') of the ordering (v, u, sigma). The swapped ordering
    /// (u, v, -sigma) has the same weight with v' and u' exchanged.
    pub fn visit_pairs(
        &self,
        v: usize,
        keep: impl Fn(usize) -> bool,
        buf: &mut Vec<(f64, PointStencil, PointStencil)>,
        mut f: impl FnMut(usize, &[(f64, PointStencil, PointStencil)]),
    ) {
        let g = &self.grid;
        let h = g.spacing();
        let w2 = g.weight() * g.weight();
        let iv = self.ints[v];
        let xv = g.node(v);
        for u in 0..v {
            if !keep(u) {
                continue;
            }
            let iu = self.ints[u];
            let d = [iv[0] - iu[0], iv[1] - iu[1], iv[2] - iu[2]];
            let d2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as usize;
            let base = w2 * self.rel_pow[d2];
            if base == 0.0 {
                continue;
            }
            let xu = g.node(u);
            let mid = [0.5 * (xv[0] + xu[0]), 0.5 * (xv[1] + xu[1]), 0.5 * (xv[2] + xu[2])];
            let r = 0.5 * h * (d2 as f64).sqrt();
            let (nodes, gi) = self.rule.lattice_rule(d);
            buf.clear();
            for &(sc, ws) in nodes {
                let s = gi.apply(sc);
                let vp = [mid[0] + r * s[0], mid[1] + r * s[1], mid[2] + r * s[2]];
                let Some(sv) = self.interp.stencil(vp) else { continue };
                let up = [mid[0] - r * s[0], mid[1] - r * s[1], mid[2] - r * s[2]];
                let Some(su) = self.interp.stencil(up) else { continue };
                buf.push((base * ws, sv, su));
            }
            if !buf.is_empty() {
                f(u, buf);
            }
        }
    }

    /// Same enumeration, also handing out the post-collision velocity v'.
    #[inline]
    fn visit_row_with_vp(
        &self,
        v: usize,
        mut f: impl FnMut(usize, f64, [f64; 3], &PointStencil, &PointStencil),
    ) {
        let g = &self.grid;
        let h = g.spacing();
        let w2 = g.weight() * g.weight();
        let iv = self.ints[v];
        let xv = g.node(v);
        for (u, iu) in self.ints.iter().enumerate() {
            if u == v {
                continue;
            }
            let d = [iv[0] - iu[0], iv[1] - iu[1], iv[2] - iu[2]];
            let d2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as usize;
            let base = w2 * self.rel_pow[d2];
            if base == 0.0 {
                continue;
            }
            let xu = g.node(u);
            let mid = [0.5 * (xv[0] + xu[0]), 0.5 * (xv[1] + xu[1]), 0.5 * (xv[2] + xu[2])];
            let r = 0.5 * h * (d2 as f64).sqrt();
            let (nodes, gi) = self.rule.lattice_rule(d);
            for &(sc, ws) in nodes {
                let s = gi.apply(sc);
                let vp = [mid[0] + r * s[0], mid[1] + r * s[1], mid[2] + r * s[2]];
                let Some(sv) = self.interp.stencil(vp) else { continue };
                let up = [mid[0] - r * s[0], mid[1] - r * s[1], mid[2] - r * s[2]];
                let Some(su) = self.interp.stencil(up) else { continue };
                f(u, base * ws, vp, &sv, &su);
            }
        }
    }

    fn check_budget(&self, matrices: u64) -> Result<()> {
        let need = matrices * OperatorMatrix::required_bytes(self.grid.len());
        if need > self.max_bytes {
            return Err(Error::Budget(format!(
                "assembly at N_v={} needs {} bytes for {} dense matrices, budget is {} bytes",
                self.grid.points_per_axis(),
                need,
                matrices,
                self.max_bytes
            )));
        }
        Ok(())
    }

    /// Assembles L, L1, L2 and the dissipation Gram matrix in one sweep.
    pub fn assemble(&self, mode: AssemblyMode) -> Result<Assembled> {
        let per_chunk = 4;
        self.check_budget(per_chunk * par::threads() as u64 + 4)?;
        let g = &self.grid;
        let m = g.len();
        let n = g.points_per_axis();
        let mu = g.mu();
        let sm = g.sqrt_mu();
        let rows: Vec<(usize, f64)> = match mode {
            AssemblyMode::Direct => (0..m).map(|i| (i, 1.0)).collect(),
            AssemblyMode::Symmetric => {
                GridSymmetry::new(g).reps.iter().map(|&(i, st)| (i, 1.0 / st as f64)).collect()
            }
        };
        let sym = match mode {
            AssemblyMode::Symmetric => Some(GridSymmetry::new(g)),
            AssemblyMode::Direct => None,
        };
        if self.collision_count() > 1 << 34 {
            log::warn!("assembly visits about {} collisions", self.collision_count());
        }

        struct Acc {
            t1: Vec<f64>,
            l1: Vec<f64>,
            l2: Vec<f64>,
            t2: Vec<f64>,
            scratch: Vec<f64>,
            touched: Vec<u32>,
            mark: Vec<bool>,
        }
        let make = || Acc {
            t1: vec![0.0; m * m],
            l1: vec![0.0; m * m],
            l2: vec![0.0; m * m],
            t2: vec![0.0; m],
            scratch: vec![0.0; m * m],
            touched: Vec::new(),
            mark: vec![false; m],
        };
        let acc = par::chunked_reduce(
            rows.len(),
            make,
            |a, r| {
                let (v, kappa) = rows[r];
                let Acc { t1, l1, l2, t2, scratch, touched, mark } = a;
                self.visit_row_with_vp(v, |u, w, vp, sv, su| {
                    let ev = sv.entries(n);
                    let eu = su.entries(n);
                    let mut dv_i = [0u32; 65];
                    let mut dv_w = [0.0; 65];
                    dv_i[..ev.len].copy_from_slice(&ev.idx[..ev.len]);
                    dv_w[..ev.len].copy_from_slice(&ev.w[..ev.len]);
                    dv_i[ev.len] = v as u32;
                    dv_w[ev.len] = -1.0;
                    let nv = ev.len + 1;
                    let mut du_i = [0u32; 65];
                    let mut du_w = [0.0; 65];
                    du_i[..eu.len].copy_from_slice(&eu.idx[..eu.len]);
                    du_w[..eu.len].copy_from_slice(&eu.w[..eu.len]);
                    du_i[eu.len] = u as u32;
                    du_w[eu.len] = -1.0;
                    let nu = eu.len + 1;

                    let a1 = kappa * w * mu[u];
                    let a2 = 0.5 * a1 * mu[v];
                    for p in 0..nv {
                        let row = dv_i[p] as usize;
                        if !mark[row] {
                            mark[row] = true;
                            touched.push(row as u32);
                        }
                        let cp = a1 * dv_w[p];
                        let srow = &mut scratch[row * m..(row + 1) * m];
                        for q in 0..nv {
                            srow[dv_i[q] as usize] += cp * dv_w[q];
                        }
                        let cp2 = a2 * dv_w[p];
                        let lrow = &mut l2[row * m..(row + 1) * m];
                        for q in 0..nu {
                            lrow[du_i[q] as usize] += cp2 * du_w[q];
                        }
                    }
                    let dm = maxwellian(vp).sqrt() - sm[v];
                    t2[u] += kappa * w * dm * dm;
                });
                // The v'-v' outer products of this row feed both T1 and L1 = mu(v)/2 T1.
                let c = 0.5 * mu[v];
                for &row in touched.iter() {
                    let row = row as usize;
                    mark[row] = false;
                    let s = &mut scratch[row * m..(row + 1) * m];
                    let t = &mut t1[row * m..(row + 1) * m];
                    let l = &mut l1[row * m..(row + 1) * m];
                    for j in 0..m {
                        let x = s[j];
                        if x != 0.0 {
                            t[j] += x;
                            l[j] += c * x;
                            s[j] = 0.0;
                        }
                    }
                }
                touched.clear();
            },
            |a, b| {
                par::add_into(&mut a.t1, &b.t1);
                par::add_into(&mut a.l1, &b.l1);
                par::add_into(&mut a.l2, &b.l2);
                par::add_into(&mut a.t2, &b.t2);
            },
        );
        let Acc { t1, l1, l2, t2, .. } = acc;
        let (t1, l1, l2, t2) = match &sym {
            Some(s) => {
                let t1 = s.symmetrize_sum(&t1, m);
                let l1 = s.symmetrize_sum(&l1, m);
                let l2 = s.symmetrize_sum(&l2, m);
                let t2 = s.symmetrize_diag(&t2);
                (t1, l1, l2, t2)
            }
            None => (t1, l1, l2, t2),
        };
        let w = g.weight();
        let to_f = |mut a: Vec<f64>| {
            for i in 0..m {
                let si = 1.0 / (sm[i] * w);
                let row = &mut a[i * m..(i + 1) * m];
                for j in 0..m {
                    row[j] *= si / sm[j];
                }
            }
            a
        };
        let l1 = to_f(l1);
        let l2 = to_f(l2);
        let mut dg = t1;
        for x in dg.iter_mut() {
            *x /= w;
        }
        for i in 0..m {
            dg[i * m + i] += t2[i] / w;
        }
        let prov = self.provenance();
        let mk = |kind, data| {
            let mut op = OperatorMatrix::new(kind, m, w, data);
            op.provenance = Some(prov.clone());
            op
        };
        let raw_l: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
        let mut l = mk(OperatorKind::L, raw_l.clone());
        l.symmetrize();
        let diff: f64 = l.data.iter().zip(&raw_l).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let raw_norm = raw_l.iter().map(|x| x * x).sum::<f64>().sqrt();
        let symmetry_defect = if raw_norm > 0.0 { diff / raw_norm } else { 0.0 };
        let mut l1 = mk(OperatorKind::L1, l1);
        l1.symmetrize();
        let mut l2 = mk(OperatorKind::L2, l2);
        l2.symmetrize();
        let mut dgram = mk(OperatorKind::DGram, dg);
        dgram.symmetrize();
        let split: f64 = l
            .data
            .iter()
            .zip(l1.data.iter().zip(&l2.data))
            .map(|(a, (b, c))| (a - b - c) * (a - b - c))
            .sum::<f64>()
            .sqrt();
        let split_defect = split / l.frobenius().max(f64::MIN_POSITIVE);
        Ok(Assembled { l, l1, l2, dgram, symmetry_defect, split_defect })
    }

    /// Weak-form coefficients c with (Q(G, F), phi) = sum_m c_m phi_m, where
    /// `gu` = G/mu and `fv` = F/mu are nodal values in the equilibrium frame
    /// and phi is a plain nodal test function.
    pub fn weak_coefficients<T: Scalar>(&self, gu: &[T], fv: &[T]) -> Vec<T> {
        let g = &self.grid;
        let m = g.len();
        let n = g.points_per_axis();
        let mu = g.mu();
        par::chunked_reduce(
            m,
            || vec![T::default(); m],
            |c, v| {
                let fvv = fv[v];
                self.visit_row(v, |u, w, sv, su| {
                    let post = stencil_eval(su, gu, n) * stencil_eval(sv, fv, n);
                    let pre = gu[u] * fvv;
                    let x = (post - pre) * (-0.5 * w * mu[u] * mu[v]);
                    stencil_scatter(sv, x, c, n);
                    c[v] += x * -1.0;
                });
            },
            |a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            },
        )
    }

    /// Q(G, F) at the nodes by direct quadrature (the slow oracle).
    pub fn q_collision_direct(&self, g_field: &[f64], f_field: &[f64]) -> Vec<f64> {
        let mu = self.grid.mu();
        let gu: Vec<f64> = g_field.iter().zip(mu).map(|(a, m)| a / m).collect();
        let fv: Vec<f64> = f_field.iter().zip(mu).map(|(a, m)| a / m).collect();
        let w = self.grid.weight();
        self.weak_coefficients(&gu, &fv).into_iter().map(|c| c / w).collect()
    }

    /// Gamma(f, g) = mu^{-1/2} Q(mu^{1/2} f, mu^{1/2} g) at the nodes.
    pub fn gamma_eval<T: Scalar>(&self, f: &[T], g: &[T]) -> Vec<T> {
        let sm = self.grid.sqrt_mu();
        let pf: Vec<T> = f.iter().zip(sm).map(|(a, s)| *a * (1.0 / s)).collect();
        let pg: Vec<T> = g.iter().zip(sm).map(|(a, s)| *a * (1.0 / s)).collect();
        let w = self.grid.weight();
        self.weak_coefficients(&pf, &pg)
            .into_iter()
            .zip(sm)
            .map(|(c, s)| c * (1.0 / (w * s)))
            .collect()
    }

    /// L f = -Gamma(sqrt(mu), f) - Gamma(f, sqrt(mu)) by direct quadrature.
    pub fn apply_l_direct(&self, f: &[f64]) -> Vec<f64> {
        let sm = self.grid.sqrt_mu();
        let a = self.gamma_eval(sm, f);
        let b = self.gamma_eval(f, sm);
        a.iter().zip(&b).map(|(x, y)| -x - y).collect()
    }

    /// ||f||_D^2 by direct summation of the two triple sums.
    pub fn dnorm_direct(&self, f: &[f64]) -> f64 {
        let g = &self.grid;
        let n = g.points_per_axis();
        let mu = g.mu();
        let sm = g.sqrt_mu();
        par::chunked_reduce(
            g.len(),
            || 0.0,
            |s, v| {
                self.visit_row_with_vp(v, |u, w, vp, sv, _| {
                    let d = sv.eval(f, n) - f[v];
                    let dm = maxwellian(vp).sqrt() - sm[v];
                    *s += w * (mu[u] * d * d + f[u] * f[u] * dm * dm);
                });
            },
            |a, b| *a += b,
        )
    }

    /// Gradient of T(f, g, h) = (Gamma(f, g), h) with respect to one slot, as a
    /// nodal field t with T = w * sum_m t_m x_m for x the chosen argument.
    pub fn trilinear_grad(&self, slot: Slot, f: &[f64], g_: &[f64], h: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let m = g.len();
        let n = g.points_per_axis();
        let mu = g.mu();
        let sm = g.sqrt_mu();
        let w = g.weight();
        let psi = |x: &[f64]| -> Vec<f64> { x.iter().zip(sm).map(|(a, s)| a / s).collect() };
        let (pf, pg, ph) = (psi(f), psi(g_), psi(h));
        let raw = match slot {
            Slot::H => self.weak_coefficients(&pf, &pg),
            Slot::F | Slot::G => par::chunked_reduce(
                m,
                || vec![0.0; m],
                |c, v| {
                    self.visit_row(v, |u, wt, sv, su| {
                        let y = -0.5 * wt * mu[u] * mu[v] * (sv.eval(&ph, n) - ph[v]);
                        if slot == Slot::G {
                            let a = y * su.eval(&pf, n);
                            stencil_scatter(sv, a, c, n);
                            c[v] -= y * pf[u];
                        } else {
                            let a = y * sv.eval(&pg, n);
                            stencil_scatter(su, a, c, n);
                            c[u] -= y * pg[v];
                        }
                    });
                },
                |a, b| par::add_into(a, &b),
            ),
        };
        raw.iter().zip(sm).map(|(c, s)| c / (s * w)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::maxwellian_field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize) -> CollisionModel {
        let g = VelocityGrid::new(6.0, n).unwrap();
        CollisionModel::new(g, KernelSpec::hard(), 4, 8).unwrap()
    }

    fn random(m: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn symmetric_assembly_matches_direct() {
        let cm = model(6);
        let a = cm.assemble(AssemblyMode::Symmetric).unwrap();
        let b = cm.assemble(AssemblyMode::Direct).unwrap();
        for (x, y) in [(&a.l, &b.l), (&a.dgram, &b.dgram), (&a.l2, &b.l2)] {
            let scale = y.max_abs();
            let err = x.data.iter().zip(&y.data).fold(0.0f64, |e, (p, q)| e.max((p - q).abs()));
            assert!(err <= 1e-11 * scale, "{err} vs {scale}");
        }
        assert!(a.split_defect < 1e-12);
        assert!(a.symmetry_defect < 1e-12);
    }

    #[test]
    fn matrix_matches_direct_paths() {
        let cm = model(6);
        let a = cm.assemble(AssemblyMode::Symmetric).unwrap();
        let f = random(cm.grid().len(), 3);
        let lf = a.l.apply_real(&f);
        let lf2 = cm.apply_l_direct(&f);
        let scale = lf2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in lf.iter().zip(&lf2) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
        let d1 = a.dgram.quad_real(&f);
        let d2 = cm.dnorm_direct(&f);
        assert!((d1 - d2).abs() <= 1e-10 * d2);
    }

    #[test]
    fn maxwellian_is_equilibrium_and_invariants_conserved() {
        let cm = model(8);
        let g = cm.grid();
        let mu = maxwellian_field(g);
        let q = cm.q_collision_direct(&mu, &mu);
        assert!(g.norm_real(&q) < 1e-10 * g.norm_real(&mu));
        let f = random(g.len(), 5);
        let ff: Vec<f64> = mu.iter().zip(&f).map(|(m, x)| m * (1.0 + 0.1 * x)).collect();
        let q = cm.q_collision_direct(&ff, &ff);
        for phi in [g.field(|_| 1.0), g.field(|v| v[0]), g.field(crate::grid::norm2)] {
            let s: f64 = q.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * g.weight();
            assert!(s.abs() < 1e-13, "{s}");
        }
    }

    #[test]
    fn gamma_bilinear_and_gradients_consistent() {
        let cm = model(6);
        let m = cm.grid().len();
        let (f, g1, g2, h) = (random(m, 1), random(m, 2), random(m, 3), random(m, 4));
        let g12: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + 2.0 * b).collect();
        let a = cm.gamma_eval(&f, &g12);
        let b1 = cm.gamma_eval(&f, &g1);
        let b2 = cm.gamma_eval(&f, &g2);
        for i in 0..m {
            assert!((a[i] - b1[i] - 2.0 * b2[i]).abs() <= 1e-12 * (1.0 + a[i].abs()));
        }
        let w = cm.grid().weight();
        let t: f64 = cm.gamma_eval(&f, &g1).iter().zip(&h).map(|(x, y)| x * y).sum::<f64>() * w;
        for (slot, x) in [(Slot::F, &f), (Slot::G, &g1), (Slot::H, &h)] {
            let gr = cm.trilinear_grad(slot, &f, &g1, &h);
            let tt: f64 = gr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * w;
            assert!((t - tt).abs() <= 1e-10 * t.abs().max(1e-300), "{slot:?}: {t} {tt}");
        }
    }
}
