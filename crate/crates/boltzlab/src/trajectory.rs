//! Initial data, time integration runs and recorded trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::CollisionModel;
use crate::error::{Error, Result};
use crate::grid::{norm2, theta_lambda_moments, MacroCoeffs, MomentSet, Projector, VelocityGrid, C64};
use crate::operator::OperatorMatrix;
use crate::spectral::{
    reconstruct_positivity, rk4_max_step, spectral_radius_bound, GammaHat, GammaHatOptions, Integrator, KGrid,
    KGridMode, PositivityReport, SpectralState, Stepper,
};

/// Frequency profile chi(|k|).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KProfile {
    /// exp(-|k|^2 / (2 width^2))
    Gaussian { width: f64 },
    /// |k|^{-a} on 0 < |k| <= cutoff, zero elsewhere (and at k = 0 when a > 0).
    PowerBump { a: f64, cutoff: f64 },
}

impl KProfile {
    pub fn eval(&self, k: f64) -> f64 {
        match *self {
            KProfile::Gaussian { width } => (-0.5 * k * k / (width * width)).exp(),
            KProfile::PowerBump { a, cutoff } => {
                if k > cutoff || (k == 0.0 && a > 0.0) {
                    0.0
                } else {
                    k.powf(-a)
                }
            }
        }
    }

    /// Largest p for which chi is in L^p(R^3) (infinity when bounded).
    pub fn lp_limit(&self) -> f64 {
        match *self {
            KProfile::Gaussian { .. } => f64::INFINITY,
            KProfile::PowerBump { a, .. } if a <= 0.0 => f64::INFINITY,
            KProfile::PowerBump { a, .. } => 3.0 / a,
        }
    }
}

/// Velocity profile g(v) of separable data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VProfile {
    /// sqrt(mu) (1 + v3 + (|v|^2-3)/2 + (v3^2-1)/2): all macro fields plus a micro part,
    /// invariant about the e3 axis.
    Standard,
    /// (I - P) of the standard profile.
    Micro,
    /// Nodal values.
    Nodal { values: Vec<f64> },
}

impl VProfile {
    pub fn field(&self, grid: &VelocityGrid) -> Result<Vec<f64>> {
        let standard = || {
            let sm = grid.sqrt_mu();
            grid.nodes()
                .iter()
                .zip(sm)
                .map(|(v, s)| s * (1.0 + v[2] + 0.5 * (norm2(*v) - 3.0) + 0.5 * (v[2] * v[2] - 1.0)))
                .collect::<Vec<f64>>()
        };
        match self {
            VProfile::Standard => Ok(standard()),
            VProfile::Micro => {
                let p = Projector::new(grid)?;
                let g = crate::grid::to_complex(&standard());
                Ok(p.micro(grid, &g).iter().map(|z| z.re).collect())
            }
            VProfile::Nodal { values } => {
                if values.len() != grid.len() {
                    return Err(Error::invalid(format!(
                        "nodal profile has {} values, grid has {}",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InitialData {
    Separable { chi: KProfile, g: VProfile },
    /// chi(k) times sqrt(mu) times a random low-degree polynomial per mode, with
    /// conjugate symmetry enforced.
    RandomPhase { chi: KProfile, seed: u64 },
}

/// sum_k w_k ||f(k)||_{L^2_v}
pub fn l1k_l2v(state: &SpectralState, grid: &VelocityGrid, kgrid: &KGrid) -> f64 {
    (0..state.modes).map(|k| kgrid.weights[k] * grid.norm(state.mode(k))).sum()
}

impl InitialData {
    /// Builds the data and rescales it so that its L^1_k L^2_v norm equals `amplitude`.
    pub fn build(&self, grid: &VelocityGrid, kgrid: &KGrid, amplitude: f64) -> Result<SpectralState> {
        let m = grid.len();
        let mut s = SpectralState::zeros(kgrid.len(), m);
        match self {
            InitialData::Separable { chi, g } => {
                let gv = g.field(grid)?;
                for k in 0..kgrid.len() {
                    let c = chi.eval(norm2(kgrid.kvecs[k]).sqrt());
                    for (z, x) in s.mode_mut(k).iter_mut().zip(&gv) {
                        *z = C64::new(c * x, 0.0);
                    }
                }
            }
            InitialData::RandomPhase { chi, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let sm = grid.sqrt_mu();
                for k in 0..kgrid.len() {
                    let c = chi.eval(norm2(kgrid.kvecs[k]).sqrt());
                    let coef: Vec<C64> =
                        (0..10).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                    for (i, z) in s.mode_mut(k).iter_mut().enumerate() {
                        let v = grid.node(i);
                        let basis = [
                            1.0,
                            v[0],
                            v[1],
                            v[2],
                            norm2(v) - 3.0,
                            v[0] * v[1],
                            v[1] * v[2],
                            v[0] * v[2],
                            v[0] * v[0] - v[1] * v[1],
                            v[2] * v[2] - 1.0,
                        ];
                        let p: C64 = coef.iter().zip(basis).map(|(a, b)| a * b).sum();
                        *z = p * (c * sm[i]);
                    }
                }
            }
        }
        if kgrid.mode == KGridMode::Lattice3d {
            s.enforce_conjugate(kgrid);
        }
        let n = l1k_l2v(&s, grid, kgrid);
        if !(n > 0.0) {
            return Err(Error::invalid("initial data vanish on the k-grid"));
        }
        s.scale(amplitude / n);
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub integrator: Integrator,
    /// Time step; None picks the RK4 stability bound (or 0.5 for Crank-Nicolson).
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    pub nonlinear: bool,
    pub rk4_safety: f64,
    pub pair_cutoff: f64,
    /// Quasi-random x samples for positivity checks at each snapshot (lattice only; 0 disables).
    pub positivity_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk4,
            dt: None,
            t_end: 1.0,
            stride: 1,
            nonlinear: false,
            rk4_safety: 0.5,
            pair_cutoff: 1e-13,
            positivity_samples: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kgrid: KGrid,
    pub dt: f64,
    pub stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<SpectralState>,
    /// [snapshot][mode]
    pub macros: Vec<Vec<MacroCoeffs>>,
    /// Theta and Lambda moments of (I - P) f, [snapshot][mode]
    pub moments: Vec<Vec<MomentSet>>,
    pub positivity: Vec<PositivityReport>,
    /// Nonlinear source recorded at each snapshot (nonlinear runs only).
    pub sources: Vec<SpectralState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
    /// Snapshots with t <= t_max (up to roundoff).
    pub fn truncated(&self, t_max: f64) -> Trajectory {
        let n = self.times.iter().take_while(|&&t| t <= t_max * (1.0 + 1e-12) + 1e-12).count();
        Trajectory {
            kgrid: self.kgrid.clone(),
            dt: self.dt,
            stride: self.stride,
            times: self.times[..n].to_vec(),
            states: self.states[..n].to_vec(),
            macros: self.macros[..n].to_vec(),
            moments: self.moments[..n].to_vec(),
            positivity: self.positivity.iter().filter(|p| p.t <= t_max * (1.0 + 1e-12) + 1e-12).cloned().collect(),
            sources: self.sources.iter().take(n).cloned().collect(),
        }
    }
    /// Rebuilds a trajectory from stored snapshots (positivity samples are not kept).
    pub fn from_states(
        grid: &VelocityGrid,
        kgrid: &KGrid,
        dt: f64,
        stride: usize,
        states: Vec<SpectralState>,
        sources: Vec<SpectralState>,
    ) -> Result<Trajectory> {
        if states.iter().chain(&sources).any(|s| s.modes != kgrid.len() || s.m != grid.len()) {
            return Err(Error::invalid("stored snapshots do not match the grids"));
        }
        let proj = Projector::new(grid)?;
        let (macros, moments) = states.iter().map(|s| record(grid, &proj, s)).unzip();
        Ok(Trajectory {
            kgrid: kgrid.clone(),
            dt,
            stride,
            times: states.iter().map(|s| s.t).collect(),
            states,
            macros,
            moments,
            positivity: Vec::new(),
            sources,
        })
    }

    pub fn min_positivity(&self) -> Option<f64> {
        self.positivity.iter().map(|p| p.min_f).reduce(f64::min)
    }
}

fn record(
    grid: &VelocityGrid,
    proj: &Projector,
    s: &SpectralState,
) -> (Vec<MacroCoeffs>, Vec<MomentSet>) {
    (0..s.modes)
        .map(|k| {
            let (c, _, micro) = proj.split(grid, s.mode(k));
            (c, theta_lambda_moments(grid, &micro))
        })
        .unzip()
}

/// Runs d/dt f + (i v.k + L) f = Gamma_hat(f, f) (nonlinear) or the linear problem.
pub fn simulate(
    model: Option<&CollisionModel>,
    grid: &VelocityGrid,
    l: &OperatorMatrix,
    kgrid: &KGrid,
    init: SpectralState,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if !(cfg.t_end > 0.0) || cfg.stride == 0 {
        return Err(Error::invalid("run needs t_end > 0 and stride >= 1"));
    }
    if init.m != grid.len() || init.modes != kgrid.len() {
        return Err(Error::invalid("initial state does not match the grids"));
    }
    if kgrid.mode == KGridMode::Lattice3d {
        let d = init.conjugate_defect(kgrid);
        if d > 1e-12 {
            return Err(Error::invalid(format!("initial data violate conjugate symmetry (defect {d:e})")));
        }
    }
    let rho = spectral_radius_bound(grid, l, kgrid.kmax());
    let bound = rk4_max_step(rho, cfg.rk4_safety);
    let dt = match (cfg.dt, cfg.integrator) {
        (Some(dt), Integrator::Rk4) if dt > bound => {
            return Err(Error::Numerical(format!(
                "RK4 step {dt} exceeds the stability bound {bound:.3e} (spectral radius estimate {rho:.3e})"
            )))
        }
        (Some(dt), _) => dt,
        (None, Integrator::Rk4) => bound,
        (None, Integrator::CrankNicolson) => 0.5,
    };
    let steps = (cfg.t_end / dt).round().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    let gamma = if cfg.nonlinear {
        let m = model.ok_or_else(|| Error::invalid("nonlinear run needs a collision model"))?;
        Some(GammaHat::new(m, kgrid, GammaHatOptions { pair_cutoff: cfg.pair_cutoff })?)
    } else {
        None
    };
    let stepper = Stepper::new(grid, l, kgrid, dt, cfg.integrator, true)?;
    let proj = Projector::new(grid)?;
    let lattice = kgrid.mode == KGridMode::Lattice3d;

    let mut traj = Trajectory {
        kgrid: kgrid.clone(),
        dt,
        stride: cfg.stride,
        times: Vec::new(),
        states: Vec::new(),
        macros: Vec::new(),
        moments: Vec::new(),
        positivity: Vec::new(),
        sources: Vec::new(),
    };
    let mut s = init;
    s.t = 0.0;
    for n in 0..=steps {
        let src = gamma.as_ref().map(|g| g.eval(&s, &s));
        if n % cfg.stride == 0 || n == steps {
            let (mc, mo) = record(grid, &proj, &s);
            traj.times.push(s.t);
            traj.macros.push(mc);
            traj.moments.push(mo);
            if lattice && cfg.positivity_samples > 0 {
                traj.positivity.push(reconstruct_positivity(&s, grid, kgrid, cfg.positivity_samples));
            }
            if let Some(x) = &src {
                traj.sources.push(x.clone());
            }
            traj.states.push(s.clone());
        }
        if n == steps {
            break;
        }
        s = match (&gamma, cfg.integrator) {
            (Some(g), Integrator::Rk4) => rk4_nonlinear(&stepper, g, &s, src.unwrap())?,
            _ => stepper.step(&s, src.as_ref())?,
        };
        s.t = (n + 1) as f64 * dt;
    }
    Ok(traj)
}

fn axpy(a: &SpectralState, c: f64, b: &SpectralState) -> SpectralState {
    let mut o = a.clone();
    for (x, y) in o.data.iter_mut().zip(&b.data) {
        *x += y * c;
    }
    o
}

/// Classical RK4 with the nonlinear term re-evaluated at every stage.
fn rk4_nonlinear(st: &Stepper, g: &GammaHat, s: &SpectralState, g0: SpectralState) -> Result<SpectralState> {
    let dt = st.dt;
    let rhs = |x: &SpectralState, gx: SpectralState| st.rhs(x, &gx);
    let k1 = rhs(s, g0);
    let s2 = axpy(s, 0.5 * dt, &k1);
    let k2 = rhs(&s2, g.eval(&s2, &s2));
    let s3 = axpy(s, 0.5 * dt, &k2);
    let k3 = rhs(&s3, g.eval(&s3, &s3));
    let s4 = axpy(s, dt, &k3);
    let k4 = rhs(&s4, g.eval(&s4, &s4));
    let mut out = s.clone();
    for i in 0..out.data.len() {
        out.data[i] += (k1.data[i] + (k2.data[i] + k3.data[i]) * 2.0 + k4.data[i]) * (dt / 6.0);
    }
    if let Some(i) = out.data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!("non-finite value in mode {}", i / out.m)));
    }
    Ok(out)
}
