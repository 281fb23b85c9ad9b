//! Linearized decay envelopes k -> ||exp(-t(i v.k + L)) g||, for k along e3.
//!
//! With k = |k| e3 the propagator commutes with the eight signed permutations
//! fixing e3, so invariant data can be evolved in the orbit basis of that
//! subgroup (252 unknowns instead of 1728 at N_v = 12).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{VelocityGrid, C64};
use crate::operator::OperatorMatrix;
use crate::par;
use crate::spectral::{KGrid, KGridMode, SpectralState};
use crate::sphere::gauss_legendre;
use crate::symmetry::{GridSymmetry, SignedPerm};

/// Orbits of the subgroup fixing e3.
#[derive(Clone, Debug)]
pub struct AxialOrbits {
    pub orbits: Vec<Vec<usize>>,
    pub orbit_of: Vec<usize>,
}

impl AxialOrbits {
    pub fn new(grid: &VelocityGrid) -> Self {
        let sym = GridSymmetry::new(grid);
        let tables: Vec<&Vec<u32>> = sym
            .elements
            .iter()
            .zip(&sym.tables)
            .filter(|(g, _)| fixes_e3(g))
            .map(|(_, t)| t)
            .collect();
        let m = grid.len();
        let mut orbit_of = vec![usize::MAX; m];
        let mut orbits = Vec::new();
        for i in 0..m {
            if orbit_of[i] != usize::MAX {
                continue;
            }
            let mut o: Vec<usize> = tables.iter().map(|t| t[i] as usize).collect();
            o.sort_unstable();
            o.dedup();
            for &j in &o {
                orbit_of[j] = orbits.len();
            }
            orbits.push(o);
        }
        Self { orbits, orbit_of }
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }
    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    /// Coordinates in the orthonormal orbit basis; errors if f is not invariant.
    pub fn reduce(&self, f: &[f64]) -> Result<Vec<f64>> {
        let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        self.orbits
            .iter()
            .map(|o| {
                let x = f[o[0]];
                if o.iter().any(|&j| (f[j] - x).abs() > 1e-12 * scale) {
                    return Err(Error::invalid("initial field is not invariant about the k axis"));
                }
                Ok(x * (o.len() as f64).sqrt())
            })
            .collect()
    }

    /// E^T A E for a dense nodal matrix.
    pub fn reduce_matrix(&self, a: &OperatorMatrix) -> DMatrix<f64> {
        let r = self.len();
        let m = a.n;
        let mut cols = vec![0.0; m * r];
        for i in 0..m {
            let row = a.row(i);
            for (k, o) in self.orbits.iter().enumerate() {
                cols[i * r + k] = o.iter().map(|&j| row[j]).sum::<f64>();
            }
        }
        DMatrix::from_fn(r, r, |p, q| {
            let s: f64 = self.orbits[p].iter().map(|&i| cols[i * r + q]).sum();
            s / ((self.orbits[p].len() * self.orbits[q].len()) as f64).sqrt()
        })
    }
}

fn fixes_e3(g: &SignedPerm) -> bool {
    g.perm[2] == 2 && g.sign[2] == 1
}

/// Radial nodes and weights 4 pi k^2 dk on [0, kmax]: Gauss-Legendre panels
/// that halve geometrically towards the origin.
pub fn radial_rule(kmax: f64, levels: usize, order: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(order);
    let mut edges = vec![0.0];
    for j in (0..levels).rev() {
        edges.push(kmax * 0.5f64.powi(j as i32));
    }
    let mut out = Vec::new();
    for p in edges.windows(2) {
        let (a, b) = (p[0], p[1]);
        for &(x, w) in &gl {
            let k = 0.5 * (a + b) + 0.5 * (b - a) * x;
            out.push((k, 4.0 * std::f64::consts::PI * k * k * 0.5 * (b - a) * w));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialEnvelope {
    pub radii: Vec<f64>,
    /// 4 pi k^2 dk
    pub weights: Vec<f64>,
    pub times: Vec<f64>,
    /// norms[i][j] = ||f(t_j, k_i)||_{L^2_v}
    pub norms: Vec<Vec<f64>>,
}

struct AxialPropagator {
    orb: AxialOrbits,
    lr: DMatrix<f64>,
    v3: Vec<f64>,
    c0: Vec<f64>,
}

impl AxialPropagator {
    fn new(grid: &VelocityGrid, l: &OperatorMatrix, g0: &[f64], dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("envelope time step must be positive"));
        }
        let orb = AxialOrbits::new(grid);
        let c0 = orb.reduce(g0)?;
        let lr = orb.reduce_matrix(l);
        let v3 = orb.orbits.iter().map(|o| grid.node(o[0])[2]).collect();
        Ok(Self { orb, lr, v3, c0 })
    }

    /// Orbit coordinates at t = j dt, j = 0..=steps, for k = |k| e3.
    fn run(&self, k: f64, dt: f64, steps: usize, mut visit: impl FnMut(&DVector<C64>)) {
        let r = self.orb.len();
        let a = DMatrix::from_fn(r, r, |p, q| {
            let d = if p == q { C64::new(0.0, k * self.v3[p]) } else { C64::new(0.0, 0.0) };
            (d + self.lr[(p, q)]) * (-dt)
        });
        let e = a.exp();
        let mut x = DVector::from_iterator(r, self.c0.iter().map(|&c| C64::new(c, 0.0)));
        for j in 0..=steps {
            if j > 0 {
                x = &e * &x;
            }
            visit(&x);
        }
    }
}

/// Propagates g exactly (matrix exponential per |k|) and samples the L^2_v norm
/// at t = j dt, j = 0..=steps.
pub fn radial_decay_envelope(
    grid: &VelocityGrid,
    l: &OperatorMatrix,
    g0: &[f64],
    rule: &[(f64, f64)],
    dt: f64,
    steps: usize,
) -> Result<RadialEnvelope> {
    let prop = AxialPropagator::new(grid, l, g0, dt)?;
    let w = grid.weight();
    let norms = par::map(rule.len(), |i| {
        let mut out = Vec::with_capacity(steps + 1);
        prop.run(rule[i].0, dt, steps, |x| out.push((x.norm_squared() * w).sqrt()));
        out
    });
    if norms.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite value in decay envelope".into()));
    }
    Ok(RadialEnvelope {
        radii: rule.iter().map(|p| p.0).collect(),
        weights: rule.iter().map(|p| p.1).collect(),
        times: (0..=steps).map(|j| j as f64 * dt).collect(),
        norms,
    })
}

/// Exact linear solution f(t, k) = exp(-t(i v.k + L)) g on a radial k-grid,
/// as full nodal snapshots at t = j dt.
pub fn radial_exact_states(
    grid: &VelocityGrid,
    l: &OperatorMatrix,
    g0: &[f64],
    kgrid: &KGrid,
    dt: f64,
    steps: usize,
) -> Result<Vec<SpectralState>> {
    if kgrid.mode != KGridMode::Radial1d {
        return Err(Error::invalid("exact states need a radial k-grid"));
    }
    let prop = AxialPropagator::new(grid, l, g0, dt)?;
    let m = grid.len();
    let per_mode = par::map(kgrid.len(), |i| {
        let mut out = Vec::with_capacity(steps + 1);
        prop.run(kgrid.kvecs[i][2], dt, steps, |x| out.push(x.clone()));
        out
    });
    let mut states = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let mut s = SpectralState::zeros(kgrid.len(), m);
        s.t = j as f64 * dt;
        for (i, traj) in per_mode.iter().enumerate() {
            let f = s.mode_mut(i);
            for (o, &x) in prop.orb.orbits.iter().zip(traj[j].iter()) {
                let v = x / (o.len() as f64).sqrt();
                for &node in o {
                    f[node] = v;
                }
            }
        }
        if s.data.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("non-finite value in exact propagation".into()));
        }
        states.push(s);
    }
    Ok(states)
}

/// Exponential rate lambda(k) of each radial node: minus the least-squares slope
/// of ln ||f(t, k)|| on the window [t0, t1].
pub fn decay_rates(env: &RadialEnvelope, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let idx: Vec<usize> = (0..env.times.len())
        .filter(|&j| env.times[j] >= window.0 && env.times[j] <= window.1)
        .collect();
    if idx.len() < 3 {
        return Err(Error::invalid(format!(
            "rate window [{}, {}] holds {} samples, need at least 3",
            window.0,
            window.1,
            idx.len()
        )));
    }
    let mut out = Vec::with_capacity(env.radii.len());
    for (i, &k) in env.radii.iter().enumerate() {
        let pts: Vec<(f64, f64)> = idx
            .iter()
            .filter(|&&j| env.norms[i][j] > 0.0)
            .map(|&j| (env.times[j], env.norms[i][j].ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Numerical(format!("norm at k = {k} vanishes inside the rate window")));
        }
        let n = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        out.push((k, -sxy / sxx));
    }
    Ok(out)
}
