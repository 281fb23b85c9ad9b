//! Dense operator matrices on the velocity grid and their on-disk cache.
//!
//! Convention: a matrix M represents the form b(f, h) = w * sum_mn conj(h_m) M_mn f_n
//! with w the node weight, so `apply` returns the field M f and b(f, h) = (M f, h).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{VelocityGrid, WeightSpec, C64};
use crate::sphere::KernelSpec;

pub const CACHE_ENV: &str = "BOLTZLAB_CACHE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    L,
    L1,
    L2,
    DGram,
    DGramWeighted(WeightSpec),
    BallMass(f64),
}

impl OperatorKind {
    pub fn tag(&self) -> String {
        match self {
            OperatorKind::L => "L".into(),
            OperatorKind::L1 => "L1".into(),
            OperatorKind::L2 => "L2".into(),
            OperatorKind::DGram => "D_GRAM".into(),
            OperatorKind::DGramWeighted(w) => format!("D_GRAM_WEIGHTED({},{})", w.ell, w.q),
            OperatorKind::BallMass(r) => format!("BALL_MASS({r})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: KernelSpec,
    pub grid_hash: String,
    pub extent: f64,
    pub points_per_axis: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub n: usize,
    pub weight: f64,
    pub data: Vec<f64>,
    pub provenance: Option<Provenance>,
    /// Relative size of the antisymmetric part removed after assembly.
    pub symmetry_defect: f64,
}

impl OperatorMatrix {
    pub fn new(kind: OperatorKind, n: usize, weight: f64, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { kind, n, weight, data, provenance: None, symmetry_defect: 0.0 }
    }

    pub fn diagonal(kind: OperatorKind, weight: f64, d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &x) in d.iter().enumerate() {
            data[i * n + i] = x;
        }
        Self::new(kind, n, weight, data)
    }

    /// ||g||^2 over the closed ball |v| <= r.
    pub fn ball_mass(grid: &VelocityGrid, r: f64) -> Self {
        let d: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|v| if crate::grid::norm2(*v) <= r * r { 1.0 } else { 0.0 })
            .collect();
        Self::diagonal(OperatorKind::BallMass(r), grid.weight(), &d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let (mut re, mut im) = (0.0, 0.0);
            for (a, z) in row.iter().zip(f) {
                re += a * z.re;
                im += a * z.im;
            }
            *o = C64::new(re, im);
        }
    }

    pub fn apply_real(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(f).map(|(a, x)| a * x).sum()).collect()
    }

    /// b(f, h) = (M f, h).
    pub fn form(&self, f: &[C64], h: &[C64]) -> C64 {
        let mf = self.apply(f);
        let s: C64 = mf.iter().zip(h).map(|(x, y)| y.conj() * x).sum();
        s * self.weight
    }

    /// Re b(f, f); for the Gram kinds this is the squared norm.
    pub fn quad(&self, f: &[C64]) -> f64 {
        self.form(f, f).re
    }

    pub fn quad_real(&self, f: &[f64]) -> f64 {
        self.apply_real(f).iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * self.weight
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Replaces M by (M + M^T)/2 and records ||M - M^T|| / ||M||.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        let mut anti = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (self.data[i * n + j], self.data[j * n + i]);
                anti += 2.0 * (a - b) * (a - b);
                let m = 0.5 * (a + b);
                self.data[i * n + j] = m;
                self.data[j * n + i] = m;
            }
        }
        let f = self.frobenius();
        self.symmetry_defect = if f > 0.0 { anti.sqrt() / f } else { 0.0 };
    }

    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut anti = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = self.data[i * n + j] - self.data[j * n + i];
                anti += 2.0 * d * d;
            }
        }
        let f = self.frobenius();
        if f > 0.0 {
            anti.sqrt() / f
        } else {
            0.0
        }
    }

    /// diag(w) M diag(w).
    pub fn weighted(&self, w: &[f64], spec: WeightSpec) -> Self {
        let n = self.n;
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] *= w[i] * w[j];
            }
        }
        let mut m = Self::new(OperatorKind::DGramWeighted(spec), n, self.weight, data);
        m.provenance = self.provenance.clone();
        m
    }

    pub fn add(&self, other: &Self, kind: OperatorKind) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        let mut m = Self::new(kind, self.n, self.weight, data);
        m.provenance = self.provenance.clone();
        m
    }

    /// Matrix of the quadratic form in the Euclidean coordinates (times w).
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        // symmetric forms: row-major equals column-major up to transposition
        DMatrix::from_row_slice(self.n, self.n, &self.data) * self.weight
    }

    pub fn required_bytes(n: usize) -> u64 {
        (n as u64) * (n as u64) * 8
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            n: self.n,
            weight: self.weight,
            provenance: self.provenance.clone(),
            symmetry_defect: self.symmetry_defect,
        })?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(MAGIC)?;
        f.write_all(&(header.len() as u64).to_le_bytes())?;
        f.write_all(&header)?;
        for x in &self.data {
            f.write_all(&x.to_le_bytes())?;
        }
        f.flush()?;
        drop(f);
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("{} is not an operator file", path.display())));
        }
        let mut len = [0u8; 8];
        f.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        f.read_exact(&mut header)?;
        let h: Header = serde_json::from_slice(&header)?;
        let mut bytes = vec![0u8; h.n * h.n * 8];
        f.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            kind: h.kind,
            n: h.n,
            weight: h.weight,
            data,
            provenance: h.provenance,
            symmetry_defect: h.symmetry_defect,
        })
    }
}

const MAGIC: &[u8; 8] = b"BZLOPM01";

#[derive(Serialize, Deserialize)]
struct Header {
    kind: OperatorKind,
    n: usize,
    weight: f64,
    provenance: Option<Provenance>,
    symmetry_defect: f64,
}

/// Directory for cached matrices: explicit, else $BOLTZLAB_CACHE, else none.
pub fn cache_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
}

pub fn cache_key(p: &Provenance, tag: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(p).expect("provenance serializes"));
    h.update(tag.as_bytes());
    hex::encode(&h.finalize()[..12])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_form() {
        let data = vec![2.0, 1.0, 1.0, 3.0];
        let mut m = OperatorMatrix::new(OperatorKind::L, 2, 0.5, data);
        m.provenance = Some(Provenance {
            spec: KernelSpec::hard(),
            grid_hash: "x".into(),
            extent: 6.0,
            points_per_axis: 2,
            n_theta: 1,
            n_phi: 1,
        });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.save(&p).unwrap();
        let back = OperatorMatrix::load(&p).unwrap();
        assert_eq!(back.data, m.data);
        assert_eq!(back.provenance, m.provenance);
        let f = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        // f^H M f = 2 + 3 + i - i = 5, times w
        assert!((m.quad(&f) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn symmetrize_records_defect() {
        let mut m = OperatorMatrix::new(OperatorKind::L, 2, 1.0, vec![1.0, 2.0, 0.0, 1.0]);
        m.symmetrize();
        assert_eq!(m.get(0, 1), 1.0);
        assert!(m.symmetry_defect > 0.0);
        assert_eq!(m.asymmetry(), 0.0);
    }
}
