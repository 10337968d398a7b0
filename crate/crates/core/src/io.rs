//! On-disk formats.
//!
//! A checkpoint is a directory holding `manifest.json` and `weights.bin`.
//! The blob stores every layer's weight as row-major little-endian `f32`,
//! layers in manifest order, each one zero-padded to an 8-byte boundary.
//!
//! A matrix file (`*.cmmx`) is
//!
//! ```text
//! "CMMX" | version: u32 | rows: u64 | cols: u64 | rows*cols f32, row-major
//! ```
//!
//! with every integer and float little-endian. Matrices are `f64` in memory
//! and `f32` on disk, so a round trip is exact only for values that are
//! already representable in `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{ActivationKind, LinearLayer, SequentialModel};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

pub const MATRIX_MAGIC: [u8; 4] = *b"CMMX";
pub const MATRIX_VERSION: u32 = 1;
const MATRIX_HEADER_LEN: usize = 4 + 4 + 8 + 8;

const ALIGN: u64 = 8;

fn align_up(n: u64) -> u64 {
    n.div_ceil(ALIGN) * ALIGN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub has_bias: bool,
    /// Kept as a string so an unknown tag can be reported by name.
    pub activation: String,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub input_dim: usize,
    pub layers: Vec<LayerEntry>,
}

impl CheckpointManifest {
    /// Total blob length implied by the layer table.
    pub fn blob_len(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| align_up((l.rows * l.cols * 4) as u64))
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        let mut expected = 0u64;
        for l in &self.layers {
            if l.byte_offset % ALIGN != 0 {
                return Err(Error::CorruptCheckpoint(format!(
                    "layer `{}` offset {} is not 8-byte aligned",
                    l.name, l.byte_offset
                )));
            }
            if l.byte_offset != expected {
                return Err(Error::CorruptCheckpoint(format!(
                    "layer `{}` starts at {}, expected {expected}",
                    l.name, l.byte_offset
                )));
            }
            expected += align_up((l.rows * l.cols * 4) as u64);
        }
        Ok(())
    }
}

fn f32_bytes(m: &DenseMatrix, what: &str) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(m.as_slice().len() * 4);
    for &v in m.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidModel(format!("{what} has a value not representable as f32: {v}")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn read_f32s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect()
}

/// Writes `manifest.json` and `weights.bin` into `dir`, creating it if needed.
pub fn save_checkpoint(model: &SequentialModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut blob = Vec::new();
    let mut layers = Vec::with_capacity(model.num_layers());
    for layer in model.layers() {
        let offset = blob.len() as u64;
        blob.extend(f32_bytes(&layer.weight, &format!("layer `{}`", layer.name))?);
        blob.resize(align_up(blob.len() as u64) as usize, 0);
        layers.push(LayerEntry {
            name: layer.name.clone(),
            rows: layer.weight.rows(),
            cols: layer.weight.cols(),
            has_bias: layer.has_bias,
            activation: layer.activation.tag().to_string(),
            byte_offset: offset,
        });
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        input_dim: model.input_dim(),
        layers,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    let blob_path = dir.join(WEIGHTS_FILE);
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<SequentialModel> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    manifest.validate()?;

    let blob_path = dir.join(WEIGHTS_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if blob.len() as u64 != manifest.blob_len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{WEIGHTS_FILE} holds {} bytes, manifest describes {}",
            blob.len(),
            manifest.blob_len()
        )));
    }

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let activation: ActivationKind = entry.activation.parse()?;
        let start = entry.byte_offset as usize;
        let end = start + entry.rows * entry.cols * 4;
        let values = read_f32s(&blob[start..end]);
        let weight = DenseMatrix::new(entry.rows, entry.cols, values)
            .map_err(|e| Error::InvalidModel(format!("layer `{}`: {e}", entry.name)))?;
        layers.push(LinearLayer::new(entry.name.clone(), weight, entry.has_bias, activation));
    }
    SequentialModel::new(manifest.input_dim, layers)
}

/// Serialized matrix file contents.
pub fn encode_matrix(m: &DenseMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + m.as_slice().len() * 4);
    out.extend_from_slice(&MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    out.extend(f32_bytes(m, "matrix")?);
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < 4 || bytes[..4] != MATRIX_MAGIC {
        return Err(Error::NotAMatrixFile("missing CMMX magic".into()));
    }
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(Error::CorruptMatrix(format!("header truncated at {} bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MATRIX_VERSION {
        return Err(Error::CorruptMatrix(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::CorruptMatrix(format!("{rows}x{cols} overflows")))?;
    let payload = &bytes[MATRIX_HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(Error::CorruptMatrix(format!(
            "{rows}x{cols} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    DenseMatrix::new(rows as usize, cols as usize, read_f32s(payload))
        .map_err(|e| Error::CorruptMatrix(e.to_string()))
}

pub fn save_matrix(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_matrix(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

/// Class labels stored as a `1 × n` matrix file.
pub fn save_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let row: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    save_matrix(&DenseMatrix::new(1, row.len(), row)?, path)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let m = load_matrix(path)?;
    if m.rows() != 1 {
        return Err(Error::InvalidShape(format!("label file must have one row, found {}", m.rows())));
    }
    m.as_slice()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidShape(format!("label {v} is not a class index")))
            }
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}
