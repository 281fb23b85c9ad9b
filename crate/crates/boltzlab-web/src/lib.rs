//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string; errors come back
//! as `{"error": "..."}` so the page can show them inline.

use boltzlab::coercivity::coercivity_spectrum;
use boltzlab::collision::{AssemblyMode, CollisionModel};
use boltzlab::envelope::{radial_decay_envelope, radial_rule};
use boltzlab::grid::VelocityGrid;
use boltzlab::norms::{fit_decay_rate, l1k_decay_integral};
use boltzlab::schedule::InterpolationSchedule;
use boltzlab::sphere::KernelSpec;
use boltzlab::trajectory::{KProfile, VProfile};
use boltzlab::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid the page offers; assembly cost grows like N^6.
pub const MAX_POINTS: usize = 8;

#[derive(Serialize)]
pub struct ScheduleView {
    pub p: Option<f64>,
    pub sigma: f64,
    pub omega: f64,
    pub theta: f64,
    pub expected_slope: f64,
}

/// Exponents of the interpolation schedule; `p <= 0` means p = infinity.
pub fn schedule_view(p: f64, eps: f64) -> Result<ScheduleView> {
    let p = if p <= 0.0 { f64::INFINITY } else { p };
    let s = InterpolationSchedule::new(p, eps)?;
    Ok(ScheduleView {
        p: p.is_finite().then_some(p),
        sigma: s.sigma,
        omega: s.omega,
        theta: s.theta_hard,
        expected_slope: -1.5 * (1.0 - 1.0 / p),
    })
}

#[derive(Serialize)]
pub struct CoercivityView {
    pub points_per_axis: usize,
    pub delta0: f64,
    pub lowest_ratios: Vec<f64>,
    pub kernel_residual: f64,
}

fn model(gamma: f64, s: f64, n: usize) -> Result<CollisionModel> {
    if n > MAX_POINTS {
        return Err(boltzlab::Error::invalid(format!("the demo allows at most {MAX_POINTS} points per axis")));
    }
    let spec = KernelSpec::new(gamma, s, 0.2, 1.0)?;
    CollisionModel::new(VelocityGrid::new(6.0, n)?, spec, 2, 4)
}

pub fn coercivity_view(gamma: f64, s: f64, n: usize) -> Result<CoercivityView> {
    let m = model(gamma, s, n)?;
    let ops = m.assemble(AssemblyMode::Symmetric)?;
    let r = coercivity_spectrum(m.grid(), &ops)?;
    Ok(CoercivityView {
        points_per_axis: n,
        delta0: r.delta0,
        lowest_ratios: r.lowest_ratios.into_iter().take(8).collect(),
        kernel_residual: r.kernel_residual,
    })
}

#[derive(Serialize)]
pub struct DecayView {
    /// (t, int chi(k) ||f(t, k)|| dk)
    pub series: Vec<(f64, f64)>,
    pub slope: f64,
    pub expected_slope: f64,
}

/// Linear decay of separable data chi(|k|) g(v); `p` selects the profile:
/// |k|^{-a} on |k| <= 3 with a = 0 for p = infinity (`p <= 0`), else a just below 3/p.
pub fn decay_view(gamma: f64, s: f64, n: usize, p: f64, t_end: f64) -> Result<DecayView> {
    let m = model(gamma, s, n)?;
    let ops = m.assemble(AssemblyMode::Symmetric)?;
    let a = if p <= 0.0 { 0.0 } else { 3.0 / p - 0.01 };
    let chi = KProfile::PowerBump { a, cutoff: 3.0 };
    let g0 = VProfile::Standard.field(m.grid())?;
    let steps = 100;
    let env = radial_decay_envelope(m.grid(), &ops.l, &g0, &radial_rule(3.0, 12, 8), t_end / steps as f64, steps)?;
    let series = l1k_decay_integral(&env, &|k| chi.eval(k), 1e-3)?;
    let fit = fit_decay_rate(&series, (0.25 * t_end, t_end))?;
    Ok(DecayView { series, slope: fit.slope, expected_slope: schedule_view(p, 0.1)?.expected_slope })
}

fn json<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

#[wasm_bindgen]
pub fn schedule(p: f64, eps: f64) -> String {
    json(schedule_view(p, eps))
}

#[wasm_bindgen]
pub fn coercivity(gamma: f64, s: f64, n: usize) -> String {
    json(coercivity_view(gamma, s, n))
}

#[wasm_bindgen]
pub fn decay(gamma: f64, s: f64, n: usize, p: f64, t_end: f64) -> String {
    json(decay_view(gamma, s, n, p, t_end))
}
