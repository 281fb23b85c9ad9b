//! Exponent bookkeeping for the time-weighted estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hoelder conjugate, with 1/inf = 0.
pub fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Smallest C with A^{1-theta} B^theta <= eta A + C B for all A, B >= 0.
pub fn young_constant(theta: f64, eta: f64) -> f64 {
    theta * ((1.0 - theta) / eta).powf((1.0 - theta) / theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftIndices {
    /// |gamma + 2s|
    pub gamma2s: f64,
    pub r: f64,
    pub j: f64,
    pub ell: f64,
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSchedule {
    pub p: f64,
    pub p_conj: f64,
    pub eps: f64,
    pub sigma: f64,
    pub omega: f64,
    pub theta_hard: f64,
    pub soft: Option<SoftIndices>,
}

/// Optional overrides for the soft-potential indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SoftOverrides {
    pub r: Option<f64>,
    pub j: Option<f64>,
    pub ell: Option<f64>,
    pub q: Option<f64>,
    pub r2: Option<f64>,
    /// r1 = 1 + 1/(sigma + eps1)
    pub eps1: Option<f64>,
}

impl InterpolationSchedule {
    pub fn new(p: f64, eps: f64) -> Result<Self> {
        let mut errs = Vec::new();
        if !(p > 1.5) {
            errs.push(format!("p = {p}: sigma > 1 requires p > 3/2"));
        }
        if !(eps > 0.0) {
            errs.push(format!("eps = {eps} must be positive"));
        }
        let sigma = 3.0 * (1.0 - inv(p)) - 2.0 * eps;
        if errs.is_empty() && !(sigma > 1.0) {
            errs.push(format!(
                "sigma = 3(1-1/p) - 2 eps = {sigma} must exceed 1 (needs eps < 1 - 3/(2p))"
            ));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs.join("\n")));
        }
        let omega = 4.0 - 3.0 * inv(p) - eps;
        Ok(Self { p, p_conj: conjugate(p), eps, sigma, omega, theta_hard: 1.0 / omega, soft: None })
    }

    /// Upper bound p'eps/(3+p') for r.
    pub fn r_max(&self) -> f64 {
        self.p_conj * self.eps / (3.0 + self.p_conj)
    }

    /// Lower bound (4p-3)/(3p-3) for r2.
    pub fn r2_min(&self) -> f64 {
        if self.p.is_infinite() {
            4.0 / 3.0
        } else {
            (4.0 * self.p - 3.0) / (3.0 * self.p - 3.0)
        }
    }

    /// Adds soft-potential indices; defaults take r at half its bound, the
    /// smallest admissible j and ell with a 10% margin, q = 0, and r2 at 1.1x its bound.
    pub fn with_soft(mut self, gamma2s: f64, o: &SoftOverrides) -> Result<Self> {
        let mut errs = Vec::new();
        if !(gamma2s > 0.0) {
            errs.push(format!("|gamma+2s| = {gamma2s} must be positive for soft potentials"));
        }
        let r = o.r.unwrap_or(0.5 * self.r_max());
        if !(r > 0.0 && r < self.r_max()) {
            errs.push(format!("r = {r} must lie in (0, p'eps/(3+p')) = (0, {})", self.r_max()));
        }
        let need = self.sigma / (2.0 * r);
        let j = o.j.unwrap_or(1.1 * need);
        let q = o.q.unwrap_or(0.0);
        let ell = o.ell.unwrap_or(if q == 0.0 { 1.1 * need } else { 0.0 });
        if !(j > need) {
            errs.push(format!("index condition: j = {j} must exceed sigma/(2r) = {need}"));
        }
        if q < 0.0 || ell < 0.0 {
            errs.push("weight indices ell and q must be nonnegative".into());
        }
        if q == 0.0 && !(ell > need) {
            errs.push(format!("index condition: q = 0 requires ell = {ell} > sigma/(2r) = {need}"));
        }
        let r2 = o.r2.unwrap_or(1.1 * self.r2_min());
        if !(r2 > self.r2_min()) {
            errs.push(format!("r2 = {r2} must exceed (4p-3)/(3p-3) = {}", self.r2_min()));
        }
        let eps1 = o.eps1.unwrap_or(0.01);
        if !(eps1 > 0.0) {
            errs.push(format!("eps1 = {eps1} must be positive"));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs.join("\n")));
        }
        self.soft = Some(SoftIndices { gamma2s, r, j, ell, q, r1: 1.0 + 1.0 / (self.sigma + eps1), r2 });
        Ok(self)
    }

    /// p'(1-theta)/theta for the hard split; equals 3 - p' eps.
    pub fn hard_k_exponent(&self) -> f64 {
        self.p_conj * (1.0 - self.theta_hard) / self.theta_hard
    }

    /// theta of the soft time split on E: (1-r)/(sigma+eps+1-r).
    pub fn theta_e(&self) -> Option<f64> {
        self.soft.as_ref().map(|s| (1.0 - s.r) / (self.sigma + self.eps + 1.0 - s.r))
    }

    /// theta of the soft low-frequency split: (1-r)/omega.
    pub fn theta_soft_k(&self) -> Option<f64> {
        self.soft.as_ref().map(|s| (1.0 - s.r) / self.omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_eps01() {
        let s = InterpolationSchedule::new(2.0, 0.1).unwrap();
        assert!((s.sigma - 1.3).abs() < 1e-14);
        assert!((s.omega - 2.4).abs() < 1e-14);
        assert!((s.theta_hard - 1.0 / 2.4).abs() < 1e-15);
        assert!((s.hard_k_exponent() - 2.8).abs() < 1e-14);
    }

    #[test]
    fn p_inf() {
        let s = InterpolationSchedule::new(f64::INFINITY, 0.1).unwrap();
        assert!((s.sigma - 2.8).abs() < 1e-14);
        assert!((s.omega - 3.9).abs() < 1e-14);
        assert!((s.sigma - s.omega + 1.1).abs() < 1e-14);
    }

    #[test]
    fn rejects_small_p() {
        for p in [1.2, 1.4, 1.5] {
            let e = InterpolationSchedule::new(p, 0.1).unwrap_err().to_string();
            assert!(e.contains("p > 3/2"), "{e}");
        }
    }

    #[test]
    fn soft_index_condition() {
        let s = InterpolationSchedule::new(2.0, 0.1).unwrap();
        let need = s.sigma / (2.0 * 0.5 * s.r_max());
        let bad = SoftOverrides { ell: Some(0.5 * need), ..Default::default() };
        let e = s.clone().with_soft(1.0, &bad).unwrap_err().to_string();
        assert!(e.contains("q = 0 requires ell"), "{e}");
        let ok = s.with_soft(1.0, &SoftOverrides::default()).unwrap();
        let soft = ok.soft.unwrap();
        assert!(soft.r2 > ok.p_conj / 3.0 + 1.0);
    }

    #[test]
    fn young_is_tight() {
        for (theta, eta) in [(0.3, 0.1), (0.7, 0.01), (1.0 / 2.4, 0.1)] {
            let c = young_constant(theta, eta);
            let x = ((1.0 - theta) / eta).powf(1.0 / theta);
            assert!((x.powf(1.0 - theta) - eta * x - c).abs() < 1e-12 * c);
        }
    }
}
