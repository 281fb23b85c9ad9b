//! File formats: binary spectral fields, CSV tables and JSON reports.
//!
//! Binary field layout (all little-endian):
//! magic `BZLFLD01`, extent V (f64), points per axis N_v (u32), mode count (u32),
//! snapshot count (u32), then per snapshot the time (f64) followed by
//! modes x N_v^3 complex values as (re, im) f64 pairs, nodes row-major over (v1, v2, v3).

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{VelocityGrid, C64};
use crate::spectral::SpectralState;

const FIELD_MAGIC: &[u8; 8] = b"BZLFLD01";

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub extent: f64,
    pub points_per_axis: usize,
    pub states: Vec<SpectralState>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn write_fields(path: &Path, grid: &VelocityGrid, states: &[SpectralState]) -> Result<()> {
    let modes = states.first().map_or(0, |s| s.modes);
    if states.iter().any(|s| s.modes != modes || s.m != grid.len()) {
        return Err(Error::invalid("snapshots differ in shape or do not match the grid"));
    }
    let mut f = create(path)?;
    f.write_all(FIELD_MAGIC)?;
    f.write_all(&grid.extent().to_le_bytes())?;
    f.write_all(&(grid.points_per_axis() as u32).to_le_bytes())?;
    f.write_all(&(modes as u32).to_le_bytes())?;
    f.write_all(&(states.len() as u32).to_le_bytes())?;
    for s in states {
        f.write_all(&s.t.to_le_bytes())?;
        for z in &s.data {
            f.write_all(&z.re.to_le_bytes())?;
            f.write_all(&z.im.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_fields(path: &Path) -> Result<FieldFile> {
    let mut f = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format(format!("{} is not a field file", path.display())));
    }
    let mut b8 = [0u8; 8];
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b8)?;
    let extent = f64::from_le_bytes(b8);
    let mut u32_ = |f: &mut BufReader<fs::File>| -> Result<usize> {
        f.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4) as usize)
    };
    let n = u32_(&mut f)?;
    let modes = u32_(&mut f)?;
    let count = u32_(&mut f)?;
    let m = n * n * n;
    let mut states = Vec::with_capacity(count);
    let mut buf = vec![0u8; modes * m * 16];
    for _ in 0..count {
        f.read_exact(&mut b8)?;
        let t = f64::from_le_bytes(b8);
        f.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        states.push(SpectralState { t, modes, m, data });
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{}: {} trailing bytes", path.display(), rest.len())));
    }
    Ok(FieldFile { extent, points_per_axis: n, states })
}

/// Writes a CSV table; every row must have one value per header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::invalid(format!("CSV row has {} values for {} columns", r.len(), header.len())));
        }
        w.write_record(r.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = BufReader::new(fs::File::open(path).map_err(|e| {
        Error::Missing(format!("{}: {e}", path.display()))
    })?);
    Ok(serde_json::from_reader(f)?)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(fs::File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = VelocityGrid::new(5.0, 4).unwrap();
        let mut a = SpectralState::zeros(3, g.len());
        for (i, z) in a.data.iter_mut().enumerate() {
            *z = C64::new(i as f64, -0.5 * i as f64);
        }
        a.t = 1.25;
        let p = dir.path().join("f.bin");
        write_fields(&p, &g, &[a.clone(), a.clone()]).unwrap();
        let back = read_fields(&p).unwrap();
        assert_eq!(back.extent, 5.0);
        assert_eq!(back.points_per_axis, 4);
        assert_eq!(back.states, vec![a.clone(), a]);
        let len = fs::metadata(&p).unwrap().len();
        assert_eq!(len, 8 + 8 + 12 + 2 * (8 + 3 * 64 * 16));
    }

    #[test]
    fn csv_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["t", "x"], &[vec![0.0, 1.5], vec![1.0, -2.25e-7]]).unwrap();
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["t", "x"]);
        assert_eq!(rows[1][1], -2.25e-7);
        assert_eq!(sha256_file(&p).unwrap().len(), 64);
        assert!(write_csv(&p, &["t"], &[vec![0.0, 1.0]]).is_err());
    }
}
