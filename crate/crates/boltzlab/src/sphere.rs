//! Collision kernel and quadrature on the unit sphere.
//!
//! Two rules live here. `SphereQuadrature` is a plain product rule over S^2
//! used as an oracle. `AngularRule` integrates `b(k.sigma) phi(sigma)` with the
//! angular singularity folded into the node placement, and is equivariant
//! under the lattice symmetry group so that assembled operators inherit the
//! exact symmetries of the continuous ones.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmetry::{canonical_int, canonical_real, stabilizer, SignedPerm};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    pub s: f64,
    pub theta_min: f64,
    pub b0: f64,
}

impl KernelSpec {
    pub fn new(gamma: f64, s: f64, theta_min: f64, b0: f64) -> Result<Self> {
        let k = Self { gamma, s, theta_min, b0 };
        k.validate()?;
        Ok(k)
    }

    pub fn hard() -> Self {
        Self { gamma: 1.0, s: 0.5, theta_min: 0.2, b0: 1.0 }
    }

    pub fn soft() -> Self {
        Self { gamma: -1.0, s: 0.5, theta_min: 0.2, b0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gamma > -3.0 && self.gamma <= 1.0) {
            bad.push(format!("gamma={} must lie in (-3, 1]", self.gamma));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            bad.push(format!("s={} must lie in (0, 1)", self.s));
        }
        if !(self.gamma > (-1.5 - 2.0 * self.s).max(-3.0)) {
            bad.push(format!(
                "gamma={} must exceed max(-3, -3/2-2s)={} for the trilinear bound",
                self.gamma,
                (-1.5 - 2.0 * self.s).max(-3.0)
            ));
        }
        if !(self.theta_min > 0.0 && self.theta_min < FRAC_PI_2) {
            bad.push(format!("theta_min={} must lie in (0, pi/2)", self.theta_min));
        }
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            bad.push(format!("b0={} must be positive", self.b0));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(bad.join("; ")))
        }
    }

    pub fn gamma2s(&self) -> f64 {
        self.gamma + 2.0 * self.s
    }

    pub fn is_hard(&self) -> bool {
        self.gamma2s() >= 0.0
    }

    /// b(cos theta) = b0 theta^{-1-2s} / sin theta on [theta_min, pi/2].
    pub fn angular(&self, cos_theta: f64) -> f64 {
        let th = cos_theta.clamp(-1.0, 1.0).acos();
        if th < self.theta_min || th > FRAC_PI_2 {
            return 0.0;
        }
        self.b0 * th.powf(-1.0 - 2.0 * self.s) / th.sin()
    }

    /// Integral of b over the sphere.
    pub fn angular_mass(&self) -> f64 {
        let t = 2.0 * self.s;
        2.0 * PI * self.b0 * (self.theta_min.powf(-t) - FRAC_PI_2.powf(-t)) / t
    }
}

/// B(v-u, sigma) = |v-u|^gamma b(cos theta); zero on the diagonal u = v.
pub fn kernel_eval(spec: &KernelSpec, v: [f64; 3], u: [f64; 3], sigma: [f64; 3]) -> f64 {
    let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let c = (d[0] * sigma[0] + d[1] * sigma[1] + d[2] * sigma[2]) / r;
    r.powf(spec.gamma) * spec.angular(c)
}

pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    if n == 1 {
        return vec![(0.0, 2.0)];
    }
    let mut v: Vec<(f64, f64)> = GaussLegendre::new(n)
        .expect("degree >= 2")
        .as_node_weight_pairs()
        .to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Product rule: Gauss-Legendre in cos(theta) times uniform azimuth.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    pub dirs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn product(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::invalid("sphere quadrature needs at least one node per direction"));
        }
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        for (x, w) in gauss_legendre(n_theta) {
            let st = (1.0 - x * x).max(0.0).sqrt();
            for j in 0..n_phi {
                let ph = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                dirs.push([st * ph.cos(), st * ph.sin(), x]);
                weights.push(w * 2.0 * PI / n_phi as f64);
            }
        }
        Ok(Self { dirs, weights })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// One node of the angular rule: direction and weight, where the weight
/// already contains b(cos theta).
pub type AngularNode = ([f64; 3], f64);

/// Kernel-aligned rule for sigma around a direction k: Gauss-Legendre in
/// t = theta^{-2s} (so theta^{-1-2s} d theta is integrated exactly) times a
/// uniform azimuth, averaged over the stabilizer of k.
#[derive(Clone, Debug)]
pub struct AngularRule {
    spec: KernelSpec,
    n_theta: usize,
    n_phi: usize,
    polar: Vec<(f64, f64, f64)>,
    table: HashMap<[i32; 3], Vec<AngularNode>>,
}

/// Reference vectors tried for the azimuthal frame; the one leaving the
/// fewest distinct nodes after stabilizer averaging wins.
const FRAME_CANDIDATES: [[f64; 3]; 4] =
    [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]];

impl AngularRule {
    pub fn new(spec: KernelSpec, n_theta: usize, n_phi: usize) -> Result<Self> {
        spec.validate()?;
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::invalid("angular rule needs n_theta, n_phi >= 1"));
        }
        let e = 2.0 * spec.s;
        let (ta, tb) = (FRAC_PI_2.powf(-e), spec.theta_min.powf(-e));
        let polar = gauss_legendre(n_theta)
            .into_iter()
            .map(|(x, w)| {
                let t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * x;
                let th = t.powf(-1.0 / e);
                let wt = 0.5 * (tb - ta) * w * spec.b0 / e * 2.0 * PI / n_phi as f64;
                (th.cos(), th.sin(), wt)
            })
            .collect();
        Ok(Self { spec, n_theta, n_phi, polar, table: HashMap::new() })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    fn base(&self, k: [f64; 3], a: [f64; 3]) -> Option<Vec<AngularNode>> {
        let ak = a[0] * k[0] + a[1] * k[1] + a[2] * k[2];
        let mut e1 = [a[0] - ak * k[0], a[1] - ak * k[1], a[2] - ak * k[2]];
        let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
        if n1 < 1e-8 {
            return None;
        }
        e1 = e1.map(|x| x / n1);
        let e2 = [
            k[1] * e1[2] - k[2] * e1[1],
            k[2] * e1[0] - k[0] * e1[2],
            k[0] * e1[1] - k[1] * e1[0],
        ];
        let mut out = Vec::with_capacity(self.polar.len() * self.n_phi);
        for &(ct, st, w) in &self.polar {
            for j in 0..self.n_phi {
                let ph = 2.0 * PI * (j as f64 + 0.5) / self.n_phi as f64;
                let (c, s) = (st * ph.cos(), st * ph.sin());
                out.push(([0, 1, 2].map(|i| ct * k[i] + c * e1[i] + s * e2[i]), w));
            }
        }
        Some(out)
    }

    /// Rule around a canonical direction (nonnegative, ascending components).
    fn canonical_rule(&self, k: [f64; 3]) -> Vec<AngularNode> {
        let stab = stabilizer(k, 1e-12);
        let mut best: Option<Vec<AngularNode>> = None;
        for a in FRAME_CANDIDATES {
            let Some(base) = self.base(k, a) else { continue };
            let mut nodes: Vec<AngularNode> = Vec::with_capacity(base.len() * stab.len());
            let scale = 1.0 / stab.len() as f64;
            for g in &stab {
                for &(s, w) in &base {
                    nodes.push((g.apply(s), w * scale));
                }
            }
            let merged = merge_nodes(nodes);
            if best.as_ref().map_or(true, |b| merged.len() < b.len()) {
                best = Some(merged);
            }
        }
        best.expect("some frame candidate is transverse")
    }

    /// Prepares the table for all integer directions with components below `max`.
    pub fn prepare_lattice(&mut self, max: i32) {
        for a in 0..max {
            for b in a..max {
                for c in b..max {
                    if c == 0 || self.table.contains_key(&[a, b, c]) {
                        continue;
                    }
                    let r = ((a * a + b * b + c * c) as f64).sqrt();
                    let k = [a as f64 / r, b as f64 / r, c as f64 / r];
                    let rule = self.canonical_rule(k);
                    self.table.insert([a, b, c], rule);
                }
            }
        }
    }

    /// Rule around the lattice direction d (integer multiple of the spacing);
    /// `prepare_lattice` must have covered |d|.
    #[inline]
    pub fn lattice_rule(&self, d: [i32; 3]) -> (&[AngularNode], SignedPerm) {
        let (c, g) = canonical_int(d);
        let rule = self
            .table
            .get(&c)
            .unwrap_or_else(|| panic!("angular table not prepared for direction {c:?}"));
        (rule, g.inverse())
    }

    /// Rule around an arbitrary unit direction.
    pub fn rule(&self, k: [f64; 3]) -> Vec<AngularNode> {
        let (c, g) = canonical_real(k);
        let gi = g.inverse();
        self.canonical_rule(c).into_iter().map(|(s, w)| (gi.apply(s), w)).collect()
    }
}

fn merge_nodes(mut nodes: Vec<AngularNode>) -> Vec<AngularNode> {
    let key = |s: &[f64; 3]| s.map(|x| (x * 1e9).round() as i64);
    nodes.sort_by(|a, b| key(&a.0).cmp(&key(&b.0)));
    let mut out: Vec<AngularNode> = Vec::with_capacity(nodes.len());
    for (s, w) in nodes {
        if let Some(last) = out.last_mut() {
            if (0..3).all(|i| (last.0[i] - s[i]).abs() < 1e-10) {
                last.1 += w;
                continue;
            }
        }
        out.push((s, w));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_examples() {
        let k = KernelSpec::hard();
        // sigma aligned with v-u: theta = 0
        assert_eq!(kernel_eval(&k, [1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = kernel_eval(&k, [2.0, 0.0, 0.0], [0.0; 3], [s, s, 0.0]);
        assert_relative_eq!(b, 4.5853, max_relative = 1e-4);
        assert_eq!(kernel_eval(&k, [1.0, 0.0, 0.0], [0.0; 3], [-s, s, 0.0]), 0.0);
        assert_eq!(kernel_eval(&KernelSpec::soft(), [1.0; 3], [1.0; 3], [0.0, 0.0, 1.0]), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::new(-2.5, 0.3, 0.2, 1.0).is_err());
        assert!(KernelSpec::new(1.0, 0.5, 1.7, 1.0).is_err());
        assert!(KernelSpec::new(-1.0, 0.5, 0.2, 1.0).is_ok());
    }

    #[test]
    fn product_rule_sums_to_sphere_area() {
        let q = SphereQuadrature::product(6, 12).unwrap();
        let sum: f64 = q.weights.iter().sum();
        assert!((sum - 4.0 * PI).abs() < 1e-10);
        assert!(q.dirs.iter().all(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn angular_rule_total_mass_and_equivariance() {
        let spec = KernelSpec::hard();
        let mut rule = AngularRule::new(spec, 5, 8).unwrap();
        rule.prepare_lattice(4);
        for d in [[1, 2, 3], [0, 0, 1], [1, 1, 1], [-2, 0, 3], [3, -3, 1]] {
            let (nodes, g) = rule.lattice_rule(d);
            let mass: f64 = nodes.iter().map(|n| n.1).sum();
            assert_relative_eq!(mass, spec.angular_mass(), max_relative = 1e-12);
            let r = ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
            for &(s, _) in nodes {
                let s = g.apply(s);
                let c = (s[0] * d[0] as f64 + s[1] * d[1] as f64 + s[2] * d[2] as f64) / r;
                let th = c.acos();
                assert!(th >= spec.theta_min - 1e-12 && th <= FRAC_PI_2 + 1e-12);
            }
        }
        // rule(-k) = -rule(k) as sets
        let (a, ga) = rule.lattice_rule([1, -2, 3]);
        let (b, gb) = rule.lattice_rule([-1, 2, -3]);
        let mut sa: Vec<_> = a.iter().map(|n| ga.apply(n.0)).collect();
        let mut sb: Vec<_> = b.iter().map(|n| gb.apply(n.0).map(|x| -x)).collect();
        let key = |s: &[f64; 3]| s.map(|x| (x * 1e9).round() as i64);
        sa.sort_by_key(key);
        sb.sort_by_key(key);
        for (x, y) in sa.iter().zip(&sb) {
            for i in 0..3 {
                assert!((x[i] - y[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn angular_rule_matches_product_rule_oracle() {
        // integral of b(k.sigma) (1 + sigma_z^2 + sigma_x) against a fine product rule
        let spec = KernelSpec::hard();
        let rule = AngularRule::new(spec, 24, 32).unwrap();
        let k = [0.3f64, -0.5, 0.8];
        let n = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let k = k.map(|x| x / n);
        let phi = |s: [f64; 3]| 1.0 + s[2] * s[2] + s[0];
        let a: f64 = rule.rule(k).iter().map(|&(s, w)| w * phi(s)).sum();
        let q = SphereQuadrature::product(800, 800).unwrap();
        let b: f64 = q
            .dirs
            .iter()
            .zip(&q.weights)
            .map(|(&s, &w)| {
                let c = s[0] * k[0] + s[1] * k[1] + s[2] * k[2];
                w * spec.angular(c) * phi(s)
            })
            .sum();
        assert_relative_eq!(a, b, max_relative = 1e-2);
    }
}
