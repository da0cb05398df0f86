//! File formats: CSV matrices, binary tensors with JSON sidecars, sparse triplets.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latentgen::Tensor3;

/// Machine-file float formatting: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_f64(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(s: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch(format!(
                    "line {} has {} fields, expected {}",
                    ln + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Sidecar describing a binary trajectory tensor of shape `N × (T + H) × dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSidecar {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub d_z: usize,
    pub d_x: usize,
    pub seed: u64,
    /// Innermost dimension of this file (`d_z` for latents, `d_x` for observations).
    pub dim: usize,
    pub dtype: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn tensor_to_bytes(t: &Tensor3) -> Vec<u8> {
    t.data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn tensor_from_bytes(bytes: &[u8], shape: [usize; 3]) -> Result<Tensor3> {
    let expected = shape.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "binary tensor has {} bytes, sidecar implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Tensor3 { shape, data })
}

/// Writes `path` (little-endian f64, row-major) and `path.json`.
pub fn write_tensor(path: &Path, t: &Tensor3, sidecar: &TensorSidecar) -> Result<()> {
    if sidecar.dim != t.shape[2] || sidecar.n != t.shape[0] || sidecar.t + sidecar.h != t.shape[1] {
        return Err(Error::DimensionMismatch("sidecar does not describe the tensor".into()));
    }
    fs::write(path, tensor_to_bytes(t))?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<(Tensor3, TensorSidecar)> {
    let side: TensorSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let t = tensor_from_bytes(&bytes, [side.n, side.t + side.h, side.dim])?;
    Ok((t, side))
}

pub fn tensor_to_csv(t: &Tensor3) -> String {
    let mut out = String::from("n,t");
    for k in 0..t.shape[2] {
        out.push_str(&format!(",v{k}"));
    }
    out.push('\n');
    for n in 0..t.shape[0] {
        for s in 0..t.shape[1] {
            out.push_str(&format!("{n},{s}"));
            for v in t.vector(n, s) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Entries with `|C_ij| > τ · max|C|`, column-major order.
pub fn sparse_triplets(c: &DMatrix<f64>, tau: f64) -> Vec<Triplet> {
    let cmax = c.amax();
    let thr = tau * cmax;
    let mut out = Vec::new();
    if cmax == 0.0 {
        return out;
    }
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            if c[(i, j)].abs() > thr {
                out.push(Triplet { i, j, value: c[(i, j)] });
            }
        }
    }
    out
}

pub fn matrix_from_triplets(n: usize, t: &[Triplet]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, n);
    for e in t {
        if e.i >= n || e.j >= n {
            return Err(Error::DimensionMismatch(format!("triplet ({}, {}) outside {n}x{n}", e.i, e.j)));
        }
        m[(e.i, e.j)] = e.value;
    }
    Ok(m)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(serde_json::from_str(&text)?)
}
