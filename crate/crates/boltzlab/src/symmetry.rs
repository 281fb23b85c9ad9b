//! The 48-element group of signed axis permutations, which maps the symmetric
//! velocity lattice onto itself.

use crate::grid::VelocityGrid;

/// (g x)_i = sign_i * x_{perm_i}
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedPerm {
    pub perm: [usize; 3],
    pub sign: [i8; 3],
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

impl SignedPerm {
    pub const IDENTITY: SignedPerm = SignedPerm { perm: [0, 1, 2], sign: [1, 1, 1] };

    pub fn all() -> Vec<SignedPerm> {
        let mut out = Vec::with_capacity(48);
        for perm in PERMS {
            for bits in 0..8u8 {
                let sign = [0, 1, 2].map(|i| if bits >> i & 1 == 1 { -1 } else { 1 });
                out.push(SignedPerm { perm, sign });
            }
        }
        out
    }

    #[inline]
    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| {
            let y = x[self.perm[i]];
            if self.sign[i] < 0 {
                -y
            } else {
                y
            }
        })
    }

    #[inline]
    pub fn apply_int(&self, x: [i32; 3]) -> [i32; 3] {
        [0, 1, 2].map(|i| self.sign[i] as i32 * x[self.perm[i]])
    }

    /// Image of a lattice multi-index on an n-point symmetric axis.
    #[inline]
    pub fn apply_index(&self, idx: [usize; 3], n: usize) -> [usize; 3] {
        [0, 1, 2].map(|i| {
            let j = idx[self.perm[i]];
            if self.sign[i] < 0 {
                n - 1 - j
            } else {
                j
            }
        })
    }

    /// Inverse element: (g^{-1} y)_{perm_i} = sign_i y_i.
    pub fn inverse(&self) -> SignedPerm {
        let mut perm = [0; 3];
        let mut sign = [1; 3];
        for i in 0..3 {
            perm[self.perm[i]] = i;
            sign[self.perm[i]] = self.sign[i];
        }
        SignedPerm { perm, sign }
    }

    pub fn compose(&self, other: &SignedPerm) -> SignedPerm {
        // (self * other) x = self(other(x))
        let mut perm = [0; 3];
        let mut sign = [1; 3];
        for i in 0..3 {
            perm[i] = other.perm[self.perm[i]];
            sign[i] = self.sign[i] * other.sign[self.perm[i]];
        }
        SignedPerm { perm, sign }
    }
}

/// Sorted absolute values of an integer vector and an element g with g d = canonical.
pub fn canonical_int(d: [i32; 3]) -> ([i32; 3], SignedPerm) {
    let a = d.map(|x| x.abs());
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&i| (a[i], i));
    let sign = [0, 1, 2].map(|i| if d[order[i]] < 0 { -1 } else { 1 });
    let g = SignedPerm { perm: order, sign };
    (g.apply_int(d), g)
}

/// Same for a real vector; ties are broken by axis order.
pub fn canonical_real(d: [f64; 3]) -> ([f64; 3], SignedPerm) {
    let a = d.map(|x| x.abs());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(i.cmp(&j)));
    let sign = [0, 1, 2].map(|i| if d[order[i]] < 0.0 { -1 } else { 1 });
    let g = SignedPerm { perm: order, sign };
    (g.apply(d), g)
}

pub fn stabilizer(x: [f64; 3], tol: f64) -> Vec<SignedPerm> {
    SignedPerm::all()
        .into_iter()
        .filter(|g| {
            let y = g.apply(x);
            (0..3).all(|i| (y[i] - x[i]).abs() <= tol)
        })
        .collect()
}

/// Node permutation tables of the group on a grid, plus the orbit
/// representatives (|v1| <= |v2| <= |v3|, all coordinates >= 0) with their
/// stabilizer orders.
#[derive(Clone, Debug)]
pub struct GridSymmetry {
    pub elements: Vec<SignedPerm>,
    pub tables: Vec<Vec<u32>>,
    pub reps: Vec<(usize, usize)>,
}

impl GridSymmetry {
    pub fn new(grid: &VelocityGrid) -> Self {
        let n = grid.points_per_axis();
        let elements = SignedPerm::all();
        let tables = elements
            .iter()
            .map(|g| {
                (0..grid.len())
                    .map(|idx| {
                        let [a, b, c] = g.apply_index(grid.multi_index(idx), n);
                        grid.index(a, b, c) as u32
                    })
                    .collect()
            })
            .collect::<Vec<Vec<u32>>>();
        let half = n / 2;
        let mut reps = Vec::new();
        for i in half..n {
            for j in i..n {
                for k in j..n {
                    let idx = grid.index(i, j, k);
                    let stab = tables.iter().filter(|t| t[idx] as usize == idx).count();
                    reps.push((idx, stab));
                }
            }
        }
        Self { elements, tables, reps }
    }

    /// A = sum_g P_g R P_g^T for a dense row-major matrix.
    pub fn symmetrize_sum(&self, r: &[f64], n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        let nz_rows: Vec<usize> =
            (0..n).filter(|&m| r[m * n..(m + 1) * n].iter().any(|&x| x != 0.0)).collect();
        for t in &self.tables {
            for &m in &nz_rows {
                let row = &r[m * n..(m + 1) * n];
                let gm = t[m] as usize;
                let out = &mut a[gm * n..(gm + 1) * n];
                for (c, &x) in row.iter().enumerate() {
                    out[t[c] as usize] += x;
                }
            }
        }
        a
    }

    pub fn symmetrize_diag(&self, d: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; d.len()];
        for t in &self.tables {
            for (m, &x) in d.iter().enumerate() {
                a[t[m] as usize] += x;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_axioms() {
        let all = SignedPerm::all();
        assert_eq!(all.len(), 48);
        let x = [0.3, -1.7, 2.9];
        for g in &all {
            assert_eq!(g.inverse().apply(g.apply(x)), x);
            for h in &all {
                assert_eq!(g.compose(h).apply(x), g.apply(h.apply(x)));
            }
        }
    }

    #[test]
    fn canonical_forms() {
        let (c, g) = canonical_int([-3, 0, 2]);
        assert_eq!(c, [0, 2, 3]);
        assert_eq!(g.apply_int([-3, 0, 2]), c);
        let (c, g) = canonical_real([0.5, -0.1, -0.9]);
        assert_eq!(c, [0.1, 0.5, 0.9]);
        assert_eq!(g.apply([0.5, -0.1, -0.9]), c);
        assert_eq!(stabilizer([0.0, 0.0, 1.0], 1e-12).len(), 8);
        assert_eq!(stabilizer([1.0, 1.0, 1.0], 1e-12).len(), 6);
        assert_eq!(stabilizer([0.1, 0.2, 0.3], 1e-12).len(), 1);
    }

    #[test]
    fn orbits_cover_grid() {
        for n in [4, 5, 6] {
            let grid = VelocityGrid::new(3.0, n).unwrap();
            let s = GridSymmetry::new(&grid);
            let total: usize = s.reps.iter().map(|&(_, st)| 48 / st).sum();
            assert_eq!(total, grid.len());
        }
    }
}
