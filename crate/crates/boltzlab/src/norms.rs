//! Mixed frequency-time-velocity norms, the energy and dissipation functionals,
//! and decay-rate fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envelope::RadialEnvelope;
use crate::error::{Error, Result};
use crate::grid::{norm2, Projector, VelocityGrid, WeightSpec, C64};
use crate::operator::OperatorMatrix;
use crate::par;
use crate::schedule::InterpolationSchedule;
use crate::sphere::gauss_legendre;
use crate::spectral::multiplier;
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KRegion {
    All,
    /// |k| <= 1 (boundary ties land here)
    Low,
    /// |k| > 1
    High,
}

impl KRegion {
    pub fn contains(&self, k: [f64; 3]) -> bool {
        let a = norm2(k);
        match self {
            KRegion::All => true,
            KRegion::Low => a <= 1.0,
            KRegion::High => a > 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeAgg {
    Sup,
    L2,
    /// Value at one snapshot.
    At(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityNorm {
    L2,
    Dissipation,
    Weighted(WeightSpec),
    WeightedDissipation(WeightSpec),
    /// |(a, b, c)|
    Macro,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTag {
    /// k exponent in [1, inf]
    pub p: f64,
    pub region: KRegion,
    pub time: TimeAgg,
    pub velocity: VelocityNorm,
    /// Apply to (I - P) f instead of f.
    pub micro: bool,
    /// Time weight (1+t)^{sigma/2}.
    pub time_weight: bool,
    /// Fourier multiplier |k|/<k>.
    pub multiplier: bool,
}

impl NormTag {
    pub fn new(p: f64, time: TimeAgg, velocity: VelocityNorm) -> Self {
        Self { p, region: KRegion::All, time, velocity, micro: false, time_weight: false, multiplier: false }
    }
    pub fn micro(mut self) -> Self {
        self.micro = true;
        self
    }
    pub fn region(mut self, r: KRegion) -> Self {
        self.region = r;
        self
    }
    pub fn weighted_time(mut self) -> Self {
        self.time_weight = true;
        self
    }
    pub fn with_multiplier(mut self) -> Self {
        self.multiplier = true;
        self
    }
}

/// Velocity-space data shared by all norm evaluations.
pub struct NormContext<'a> {
    pub grid: &'a VelocityGrid,
    pub proj: Projector,
    pub dgram: Option<&'a OperatorMatrix>,
    pub sigma: f64,
}

impl<'a> NormContext<'a> {
    pub fn new(grid: &'a VelocityGrid, dgram: Option<&'a OperatorMatrix>, sigma: f64) -> Result<Self> {
        Ok(Self { grid, proj: Projector::new(grid)?, dgram, sigma })
    }

    fn velocity_value(&self, tag: &NormTag, traj: &Trajectory, snap: usize, k: usize) -> Result<f64> {
        if let VelocityNorm::Macro = tag.velocity {
            return Ok(traj.macros[snap][k].abs());
        }
        let f = traj.states[snap].mode(k);
        let micro;
        let x: &[C64] = if tag.micro {
            micro = self.proj.micro(self.grid, f);
            &micro
        } else {
            f
        };
        let weighted = |w: &WeightSpec| -> Vec<C64> {
            x.iter().zip(self.grid.nodes()).map(|(z, v)| z * w.eval(*v)).collect()
        };
        let dnorm = |y: &[C64]| -> Result<f64> {
            let d = self.dgram.ok_or_else(|| {
                Error::Missing("dissipation Gram matrix (run the assemble stage first)".into())
            })?;
            Ok(d.quad(y).max(0.0).sqrt())
        };
        match &tag.velocity {
            VelocityNorm::L2 => Ok(self.grid.norm(x)),
            VelocityNorm::Dissipation => dnorm(x),
            VelocityNorm::Weighted(w) => Ok(self.grid.norm(&weighted(w))),
            VelocityNorm::WeightedDissipation(w) => dnorm(&weighted(w)),
            VelocityNorm::Macro => unreachable!(),
        }
    }
}

/// Time aggregate of per-snapshot values.
fn time_aggregate(times: &[f64], vals: &[f64], agg: TimeAgg) -> Result<f64> {
    match agg {
        TimeAgg::Sup => Ok(vals.iter().cloned().fold(0.0, f64::max)),
        TimeAgg::L2 => {
            let mut s = 0.0;
            for i in 1..vals.len() {
                s += 0.5 * (times[i] - times[i - 1]) * (vals[i] * vals[i] + vals[i - 1] * vals[i - 1]);
            }
            Ok(s.sqrt())
        }
        TimeAgg::At(i) => vals
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("snapshot {i} out of range ({} snapshots)", vals.len()))),
    }
}

/// k aggregate: (sum_k w_k x_k^p)^{1/p}, or the max for p = inf.
pub fn k_aggregate(weights: &[f64], vals: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        vals.iter().cloned().fold(0.0, f64::max)
    } else if p == 1.0 {
        weights.iter().zip(vals).map(|(w, x)| w * x).sum()
    } else {
        weights.iter().zip(vals).map(|(w, x)| w * x.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Per-mode time aggregates of a tag (modes outside the region are omitted).
pub fn per_mode(traj: &Trajectory, tag: &NormTag, ctx: &NormContext) -> Result<Vec<(usize, f64)>> {
    if !(tag.p >= 1.0) {
        return Err(Error::invalid(format!("k exponent {} must be >= 1", tag.p)));
    }
    let kg = &traj.kgrid;
    let modes: Vec<usize> = (0..kg.len()).filter(|&k| tag.region.contains(kg.kvecs[k])).collect();
    let res = par::map(modes.len(), |i| -> Result<f64> {
        let k = modes[i];
        let mut vals = Vec::with_capacity(traj.len());
        for (s, &t) in traj.times.iter().enumerate() {
            let mut x = ctx.velocity_value(tag, traj, s, k)?;
            if tag.time_weight {
                x *= (1.0 + t).powf(0.5 * ctx.sigma);
            }
            vals.push(x);
        }
        let mut a = time_aggregate(&traj.times, &vals, tag.time)?;
        if tag.multiplier {
            a *= multiplier(kg.kvecs[k]);
        }
        Ok(a)
    });
    modes.into_iter().zip(res).map(|(k, r)| r.map(|x| (k, x))).collect()
}

pub fn mixed_norm(traj: &Trajectory, tag: &NormTag, ctx: &NormContext) -> Result<f64> {
    let pm = per_mode(traj, tag, ctx)?;
    let w: Vec<f64> = pm.iter().map(|(k, _)| traj.kgrid.weights[*k]).collect();
    let v: Vec<f64> = pm.iter().map(|(_, x)| *x).collect();
    Ok(k_aggregate(&w, &v, tag.p))
}

/// ||f0||_{L^p_k L^2_v} (weighted when `w` is given).
pub fn initial_norm(traj: &Trajectory, ctx: &NormContext, p: f64, w: Option<WeightSpec>) -> Result<f64> {
    let vel = w.map_or(VelocityNorm::L2, VelocityNorm::Weighted);
    mixed_norm(traj, &NormTag::new(p, TimeAgg::At(0), vel), ctx)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub values: BTreeMap<String, f64>,
    pub components: BTreeMap<String, BTreeMap<String, f64>>,
}

impl FunctionalReport {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.values.get(name).copied().ok_or_else(|| Error::Missing(format!("functional {name}")))
    }

    fn put(&mut self, name: &str, parts: Vec<(&str, f64)>) {
        let total = parts.iter().map(|p| p.1).sum();
        self.values.insert(name.into(), total);
        self.components.insert(name.into(), parts.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
    }
}

/// N(T) = ||f||_{L^1_k L^inf_T L^2_v} + int sup_t (1+t)^{sigma/2} |(a,b,c)| dk.
pub fn n_functional(traj: &Trajectory, ctx: &NormContext) -> Result<f64> {
    let a = mixed_norm(traj, &NormTag::new(1.0, TimeAgg::Sup, VelocityNorm::L2), ctx)?;
    let b = mixed_norm(traj, &NormTag::new(1.0, TimeAgg::Sup, VelocityNorm::Macro).weighted_time(), ctx)?;
    Ok(a + b)
}

/// Every named functional; `weight` defaults to the unit weight.
pub fn functional_suite(
    traj: &Trajectory,
    ctx: &NormContext,
    schedule: &InterpolationSchedule,
    weight: Option<WeightSpec>,
) -> Result<FunctionalReport> {
    let w = weight.unwrap_or_else(WeightSpec::unit);
    let mut r = FunctionalReport::default();
    let n = |tag: NormTag| mixed_norm(traj, &tag, ctx);
    let sup = |p: f64, v| NormTag::new(p, TimeAgg::Sup, v);
    let l2t = |p: f64, v| NormTag::new(p, TimeAgg::L2, v);
    use KRegion::{High, Low};
    use VelocityNorm::{Dissipation as D, Macro, Weighted as Wt, WeightedDissipation as WD, L2};

    for (suffix, p) in [("1", 1.0), ("p", schedule.p)] {
        r.put(
            &format!("E{suffix}"),
            vec![
                ("f_sup_l2", n(sup(p, L2))?),
                ("w_micro_low_sup_l2", n(sup(p, Wt(w)).micro().region(Low))?),
                ("w_f_high_sup_l2", n(sup(p, Wt(w)).region(High))?),
            ],
        );
        r.put(
            &format!("D{suffix}"),
            vec![
                ("micro_l2t_d", n(l2t(p, D).micro())?),
                ("w_micro_low_l2t_d", n(l2t(p, WD(w)).micro().region(Low))?),
                ("w_f_high_l2t_d", n(l2t(p, WD(w)).region(High))?),
                ("mult_abc_l2t", n(l2t(p, Macro).with_multiplier())?),
            ],
        );
    }
    r.put(
        "scriptE",
        vec![
            ("tw_f_sup_l2", n(sup(1.0, L2).weighted_time())?),
            ("tw_w_micro_low_sup_l2", n(sup(1.0, Wt(w)).micro().region(Low).weighted_time())?),
            ("tw_w_f_high_sup_l2", n(sup(1.0, Wt(w)).region(High).weighted_time())?),
        ],
    );
    r.put(
        "scriptD",
        vec![
            ("tw_micro_l2t_d", n(l2t(1.0, D).micro().weighted_time())?),
            ("tw_w_micro_low_l2t_d", n(l2t(1.0, WD(w)).micro().region(Low).weighted_time())?),
            ("tw_w_f_high_l2t_d", n(l2t(1.0, WD(w)).region(High).weighted_time())?),
            ("tw_mult_abc_l2t", n(l2t(1.0, Macro).with_multiplier().weighted_time())?),
        ],
    );
    let nn = n_functional(traj, ctx)?;
    r.put("N", vec![("N", nn)]);
    r.put(
        "micro_apriori_l1k_lhs",
        vec![("f_sup_l2", n(sup(1.0, L2))?), ("micro_l2t_d", n(l2t(1.0, D).micro())?)],
    );
    r.put(
        "micro_apriori_lpk_lhs",
        vec![("f_sup_l2", n(sup(schedule.p, L2))?), ("micro_l2t_d", n(l2t(schedule.p, D).micro())?)],
    );
    r.put(
        "hard_weighted_lhs",
        vec![
            ("tw_f_sup_l2", n(sup(1.0, L2).weighted_time())?),
            ("tw_micro_l2t_d", n(l2t(1.0, D).micro().weighted_time())?),
            ("tw_mult_abc_l2t", n(l2t(1.0, Macro).with_multiplier().weighted_time())?),
        ],
    );
    r.put(
        "hard_lp_lhs",
        vec![
            ("f_sup_l2", n(sup(schedule.p, L2))?),
            ("micro_l2t_d", n(l2t(schedule.p, D).micro())?),
            ("mult_abc_l2t", n(l2t(schedule.p, Macro).with_multiplier())?),
        ],
    );
    Ok(r)
}

/// t -> int 4 pi k^2 chi(k) ||exp(-t(i v.k + L)) g||_{L^2_v} dk by the envelope's radial rule.
///
/// Fails when chi is not resolved: k^2 chi beyond the rule above `tol` of its peak, or a relative error above
/// `tol` in int chi 4 pi k^2 dk against a refined reference quadrature.
pub fn l1k_decay_integral(env: &RadialEnvelope, chi: &dyn Fn(f64) -> f64, tol: f64) -> Result<Vec<(f64, f64)>> {
    if !env.radii.iter().any(|&k| k > 0.0) {
        return Err(Error::invalid("envelope has no positive radii"));
    }
    let cover = support_edge(env);
    let peak = env.radii.iter().map(|&k| (k * k * chi(k)).abs()).fold(0.0, f64::max);
    for j in 1..=20 {
        let k = cover * (1.0 + 0.05 * j as f64);
        if (k * k * chi(k)).abs() > tol * peak {
            return Err(Error::Numerical(format!(
                "initial k-profile is not negligible at |k| = {k:.3}, beyond the envelope grid (|k| <= {cover:.3})"
            )));
        }
    }
    let approx: f64 = env.radii.iter().zip(&env.weights).map(|(k, w)| w * chi(*k)).sum();
    let reference = reference_radial_integral(chi, cover);
    let err = (approx - reference).abs() / reference.abs().max(1e-300);
    if !(err <= tol) {
        return Err(Error::Numerical(format!(
            "radial grid too coarse for the k-profile: relative quadrature error {err:.2e} exceeds {tol:.0e}"
        )));
    }
    Ok(env
        .times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let s = (0..env.radii.len()).map(|i| env.weights[i] * chi(env.radii[i]) * env.norms[i][j]).sum();
            (t, s)
        })
        .collect())
}

/// Upper end of the interval integrated by the envelope's radial weights.
fn support_edge(env: &RadialEnvelope) -> f64 {
    // int 4 pi k^2 dk = 4 pi K^3 / 3 for a rule exact on quadratics
    let vol: f64 = env.weights.iter().sum();
    (3.0 * vol / (4.0 * std::f64::consts::PI)).cbrt()
}

fn reference_radial_integral(chi: &dyn Fn(f64) -> f64, kmax: f64) -> f64 {
    let gl = gauss_legendre(24);
    let mut s = 0.0;
    let mut hi = kmax;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        for &(x, w) in &gl {
            let k = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
            s += 4.0 * std::f64::consts::PI * k * k * chi(k) * 0.5 * (hi - lo) * w;
        }
        hi = lo;
    }
    s
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    /// Two standard errors of the slope.
    pub width: f64,
    pub samples: usize,
}

/// Least-squares slope of log(value) against log(1+t) over t in [t1, t2].
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .map(|&(t, v)| (t, v))
        .collect();
    if pts.len() < 5 {
        return Err(Error::invalid(format!(
            "decay fit needs at least 5 samples in [{}, {}], found {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Numerical(format!("non-positive value {v} at t = {t} in decay fit")));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    Ok(DecayFit { slope, width: 2.0 * se, samples: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::radial_rule;

    fn proxy_envelope(kmax: f64, times: &[f64]) -> RadialEnvelope {
        let rule = radial_rule(kmax, 16, 10);
        RadialEnvelope {
            radii: rule.iter().map(|p| p.0).collect(),
            weights: rule.iter().map(|p| p.1).collect(),
            times: times.to_vec(),
            norms: rule.iter().map(|p| times.iter().map(|t| (-p.0 * p.0 * t).exp()).collect()).collect(),
        }
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, (1.0 + i as f64).powf(-1.5))).collect();
        let f = fit_decay_rate(&s, (0.0, 100.0)).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-10 && f.width < 1e-8);
        let c: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 2.0)).collect();
        assert!(fit_decay_rate(&c, (0.0, 100.0)).unwrap().slope.abs() < 1e-14);
        assert!(fit_decay_rate(&c, (10.0, 12.0)).is_err());
    }

    #[test]
    fn heat_proxy_slopes() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let env = proxy_envelope(1.0, &times);
        let chi = |k: f64| if k <= 1.0 { 1.0 } else { 0.0 };
        let series = l1k_decay_integral(&env, &chi, 1e-6).unwrap();
        assert!((series[0].1 - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-10);
        let f = fit_decay_rate(&series, (10.0, 100.0)).unwrap();
        assert!((f.slope + 1.5).abs() < 0.05, "{f:?}");
        // large-t asymptote pi^{3/2} t^{-3/2}
        let t: f64 = 100.0;
        assert!((series[100].1 / (std::f64::consts::PI.powf(1.5) * t.powf(-1.5)) - 1.0).abs() < 1e-6);

        let a = 3.0 / 2.0 - 0.01;
        let chi2 = move |k: f64| if k > 0.0 && k <= 1.0 { k.powf(-a) } else { 0.0 };
        let s2 = l1k_decay_integral(&env, &chi2, 1e-3).unwrap();
        let f2 = fit_decay_rate(&s2, (25.0, 100.0)).unwrap();
        assert!((f2.slope + 0.75).abs() < 0.15, "{f2:?}");
    }

    #[test]
    fn coarse_or_short_grid_fails() {
        let env = proxy_envelope(1.0, &[0.0, 1.0]);
        let wide = |k: f64| if k <= 2.0 { 1.0 } else { 0.0 };
        assert!(l1k_decay_integral(&env, &wide, 1e-3).is_err());
        let rule = radial_rule(1.0, 1, 2);
        let coarse = RadialEnvelope {
            radii: rule.iter().map(|p| p.0).collect(),
            weights: rule.iter().map(|p| p.1).collect(),
            times: vec![0.0],
            norms: rule.iter().map(|_| vec![1.0]).collect(),
        };
        let sing = |k: f64| if k > 0.0 && k <= 1.0 { k.powf(-2.5) } else { 0.0 };
        assert!(l1k_decay_integral(&coarse, &sing, 1e-3).is_err());
    }

    #[test]
    fn k_aggregate_cases() {
        assert!((k_aggregate(&[0.008], &[3.0], 1.0) - 0.024).abs() < 1e-15);
        assert_eq!(k_aggregate(&[1.0, 1.0], &[1.0, 4.0], f64::INFINITY), 4.0);
        assert!((k_aggregate(&[1.0, 1.0], &[3.0, 4.0], 2.0) - 5.0).abs() < 1e-14);
    }
}
