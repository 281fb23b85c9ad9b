//! Tensor-product quadratic Lagrange stencils for post-collision values.
//!
//! Along each axis the 3-node window is picked among the two windows that
//! bracket x, minimising the amplification the stencil would have on a field
//! carrying a sqrt(mu) factor. Exact ties are averaged so the choice commutes
//! with x -> -x.

use crate::grid::VelocityGrid;

#[derive(Clone, Copy, Debug, Default)]
pub struct AxisStencil {
    pub start: u32,
    pub len: u8,
    pub w: [f64; 4],
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PointStencil {
    pub axes: [AxisStencil; 3],
}

/// Up to 4^3 (node, weight) pairs.
#[derive(Clone, Copy)]
pub struct Entries {
    pub idx: [u32; 64],
    pub w: [f64; 64],
    pub len: usize,
}

impl PointStencil {
    #[inline]
    pub fn entries(&self, n: usize) -> Entries {
        let mut e = Entries { idx: [0; 64], w: [0.0; 64], len: 0 };
        let [a, b, c] = &self.axes;
        for i in 0..a.len as usize {
            let wi = a.w[i];
            let ri = (a.start as usize + i) * n;
            for j in 0..b.len as usize {
                let wij = wi * b.w[j];
                let rj = (ri + b.start as usize + j) * n;
                for k in 0..c.len as usize {
                    e.idx[e.len] = (rj + c.start as usize + k) as u32;
                    e.w[e.len] = wij * c.w[k];
                    e.len += 1;
                }
            }
        }
        e
    }

    /// Plain interpolation of nodal values.
    #[inline]
    pub fn eval(&self, f: &[f64], n: usize) -> f64 {
        let [a, b, c] = &self.axes;
        let mut s = 0.0;
        for i in 0..a.len as usize {
            let ri = (a.start as usize + i) * n;
            let mut sj = 0.0;
            for j in 0..b.len as usize {
                let rj = (ri + b.start as usize + j) * n + c.start as usize;
                let mut sk = 0.0;
                for k in 0..c.len as usize {
                    sk += c.w[k] * f[rj + k];
                }
                sj += b.w[j] * sk;
            }
            s += a.w[i] * sj;
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Interpolator {
    n: usize,
    lo: f64,
    hi: f64,
    h: f64,
    axis: Vec<f64>,
    amp: Vec<f64>,
}

const TIE: f64 = 1e-12;

impl Interpolator {
    pub fn new(grid: &VelocityGrid) -> Self {
        let axis = grid.axis().to_vec();
        let amp = axis.iter().map(|x| (x * x / 4.0).exp()).collect();
        Self {
            n: grid.points_per_axis(),
            lo: axis[0],
            hi: axis[axis.len() - 1],
            h: grid.spacing(),
            axis,
            amp,
        }
    }

    #[inline]
    fn lagrange(&self, s: usize, x: f64) -> ([f64; 3], f64) {
        let t = (x - self.axis[s]) / self.h;
        let w = [0.5 * (t - 1.0) * (t - 2.0), -t * (t - 2.0), 0.5 * t * (t - 1.0)];
        let a = w[0].abs() * self.amp[s] + w[1].abs() * self.amp[s + 1] + w[2].abs() * self.amp[s + 2];
        (w, a)
    }

    /// None when x lies outside the node hull.
    #[inline]
    pub fn axis_stencil(&self, x: f64) -> Option<AxisStencil> {
        let eps = 1e-12 * self.h;
        if !(x >= self.lo - eps && x <= self.hi + eps) {
            return None;
        }
        let n = self.n;
        let c = (((x - self.lo) / self.h).floor().max(0.0) as usize).min(n - 2);
        let s1 = c.saturating_sub(1).min(n - 3);
        let s2 = c.min(n - 3);
        if s1 == s2 {
            let (w, _) = self.lagrange(s1, x);
            return Some(AxisStencil { start: s1 as u32, len: 3, w: [w[0], w[1], w[2], 0.0] });
        }
        let (w1, a1) = self.lagrange(s1, x);
        let (w2, a2) = self.lagrange(s2, x);
        if (a1 - a2).abs() <= TIE * a1.max(a2) {
            Some(AxisStencil {
                start: s1 as u32,
                len: 4,
                w: [0.5 * w1[0], 0.5 * (w1[1] + w2[0]), 0.5 * (w1[2] + w2[1]), 0.5 * w2[2]],
            })
        } else if a1 < a2 {
            Some(AxisStencil { start: s1 as u32, len: 3, w: [w1[0], w1[1], w1[2], 0.0] })
        } else {
            Some(AxisStencil { start: s2 as u32, len: 3, w: [w2[0], w2[1], w2[2], 0.0] })
        }
    }

    #[inline]
    pub fn stencil(&self, x: [f64; 3]) -> Option<PointStencil> {
        Some(PointStencil {
            axes: [self.axis_stencil(x[0])?, self.axis_stencil(x[1])?, self.axis_stencil(x[2])?],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}
