//! Deterministic on-disk artifacts.
//!
//! Field data travels in a small binary container: a four-byte magic tag, a
//! format version, a length-prefixed JSON metadata record, then the raw
//! little-endian `f64` payload.  Nodes are row-major with axis 0 slowest
//! among spatial axes; for space-time payloads the time level is slower
//! still.  JSON output always has sorted keys and floats are printed with
//! full round-trip precision, so identical runs produce byte-identical
//! files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fields::{BoundaryData, BoundaryKind, Grid, ScalarField, SpaceTimeField};

pub const MAGIC: [u8; 4] = *b"MFGA";
pub const FORMAT_VERSION: u32 = 1;

/// Metadata record stored inside every binary artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactMeta {
    /// Payload layout: "scalar", "space_time", "boundary_trace",
    /// "boundary_flux", or a caller-defined tag.
    pub kind: String,
    pub dim: usize,
    pub extent: Vec<[f64; 2]>,
    pub n_cells: Vec<usize>,
    pub t_horizon: f64,
    pub n_time: usize,
    /// Hash of the generating configuration, hex-encoded.
    pub config_hash: String,
    pub seed: u64,
    /// Free-form labels (perturbation sizes, component names, ...).
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ArtifactMeta {
    pub fn for_grid(grid: &Grid, kind: &str, config_hash: &str, seed: u64) -> Self {
        ArtifactMeta {
            kind: kind.to_string(),
            dim: grid.dim(),
            extent: grid.extent()[..grid.dim()].to_vec(),
            n_cells: grid.n_cells()[..grid.dim()].to_vec(),
            t_horizon: grid.t_horizon(),
            n_time: grid.n_time(),
            config_hash: config_hash.to_string(),
            seed,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: serde_json::Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    /// Rebuild the grid this artifact was sampled on.
    pub fn grid(&self) -> Result<Arc<Grid>, ConfigError> {
        let bad = |msg: &str| ConfigError::Validation(msg.to_string());
        match self.dim {
            1 => Grid::new_1d(
                self.extent[0][0],
                self.extent[0][1],
                *self.n_cells.first().ok_or_else(|| bad("missing n_cells"))?,
                self.t_horizon,
                self.n_time,
            ),
            2 => {
                if self.extent.len() < 2 || self.n_cells.len() < 2 {
                    return Err(bad("two-dimensional artifact lacks axis data"));
                }
                Grid::new_2d(
                    [self.extent[0], self.extent[1]],
                    [self.n_cells[0], self.n_cells[1]],
                    self.t_horizon,
                    self.n_time,
                )
            }
            d => return Err(bad(&format!("unsupported dimension {d}"))),
        }
        .map_err(|e| ConfigError::Validation(e.to_string()))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ConfigError {
    ConfigError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write a binary artifact (metadata + raw f64 payload).
pub fn write_artifact(path: &Path, meta: &ArtifactMeta, values: &[f64]) -> Result<(), ConfigError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let meta_bytes =
        serde_json::to_vec(meta).map_err(|e| ConfigError::Parse(format!("metadata: {e}")))?;
    (|| -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&meta_bytes)?;
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Read a binary artifact back.
pub fn read_artifact(path: &Path) -> Result<(ArtifactMeta, Vec<f64>), ConfigError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let parse = |msg: String| ConfigError::Parse(msg);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if magic != MAGIC {
        return Err(parse(format!("{}: not a field artifact", path.display())));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(parse(format!("unsupported artifact version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|e| io_err(path, e))?;
    let meta_len = u64::from_le_bytes(u64buf) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes).map_err(|e| io_err(path, e))?;
    let meta: ArtifactMeta =
        serde_json::from_slice(&meta_bytes).map_err(|e| parse(format!("metadata: {e}")))?;
    r.read_exact(&mut u64buf).map_err(|e| io_err(path, e))?;
    let n = u64::from_le_bytes(u64buf) as usize;
    let mut values = vec![0.0f64; n];
    let mut f64buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut f64buf).map_err(|e| io_err(path, e))?;
        *v = f64::from_le_bytes(f64buf);
    }
    Ok((meta, values))
}

pub fn write_scalar_field(
    path: &Path,
    field: &ScalarField,
    config_hash: &str,
    seed: u64,
) -> Result<(), ConfigError> {
    let meta = ArtifactMeta::for_grid(field.grid(), "scalar", config_hash, seed);
    write_artifact(path, &meta, field.values())
}

pub fn read_scalar_field(path: &Path) -> Result<ScalarField, ConfigError> {
    let (meta, values) = read_artifact(path)?;
    let grid = meta.grid()?;
    ScalarField::new(grid, values).map_err(|e| ConfigError::Validation(e.to_string()))
}

pub fn write_space_time_field(
    path: &Path,
    field: &SpaceTimeField,
    config_hash: &str,
    seed: u64,
) -> Result<(), ConfigError> {
    let meta = ArtifactMeta::for_grid(field.grid(), "space_time", config_hash, seed);
    write_artifact(path, &meta, field.values())
}

pub fn read_space_time_field(path: &Path) -> Result<SpaceTimeField, ConfigError> {
    let (meta, values) = read_artifact(path)?;
    let grid = meta.grid()?;
    SpaceTimeField::new(grid, values).map_err(|e| ConfigError::Validation(e.to_string()))
}

pub fn write_boundary_data(
    path: &Path,
    data: &BoundaryData,
    config_hash: &str,
    seed: u64,
) -> Result<(), ConfigError> {
    let kind = match data.kind() {
        BoundaryKind::Trace => "boundary_trace",
        BoundaryKind::NormalDerivative => "boundary_flux",
    };
    let meta = ArtifactMeta::for_grid(data.grid(), kind, config_hash, seed);
    write_artifact(path, &meta, data.values())
}

pub fn read_boundary_data(path: &Path) -> Result<BoundaryData, ConfigError> {
    let (meta, values) = read_artifact(path)?;
    let kind = match meta.kind.as_str() {
        "boundary_trace" => BoundaryKind::Trace,
        "boundary_flux" => BoundaryKind::NormalDerivative,
        other => {
            return Err(ConfigError::Parse(format!(
                "artifact kind {other:?} is not boundary data"
            )))
        }
    };
    let grid = meta.grid()?;
    BoundaryData::new(grid, kind, values).map_err(|e| ConfigError::Validation(e.to_string()))
}

/// Write rows of floats as CSV with full round-trip precision.  Row order is
/// the caller's; formatting is locale-free, so output is reproducible.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), ConfigError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Write a JSON report; keys serialize in sorted order so identical runs give
/// identical bytes.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), ConfigError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| ConfigError::Parse(format!("report: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_roundtrip_preserves_bits() {
        let dir = std::env::temp_dir().join("mfg-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.mfga");
        let grid = Grid::new_1d(0.0, 1.0, 9, 0.5, 4).unwrap();
        let field = ScalarField::from_fn(grid.clone(), |x| (1.0 + x[0]).ln());
        write_scalar_field(&path, &field, "deadbeef", 7).unwrap();
        let back = read_scalar_field(&path).unwrap();
        assert!(back.grid().same_layout(&grid));
        assert_eq!(back.values(), field.values());
        // Byte-identical on rewrite.
        let bytes1 = std::fs::read(&path).unwrap();
        write_scalar_field(&path, &field, "deadbeef", 7).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = std::env::temp_dir().join("mfg-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("not-an-artifact.bin");
        std::fs::write(&path, b"PNG\x89 something else").unwrap();
        assert!(read_artifact(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn boundary_roundtrip_keeps_kind() {
        let dir = std::env::temp_dir().join("mfg-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("flux.mfga");
        let grid = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [5, 5], 1.0, 2).unwrap();
        let data = BoundaryData::from_fn(grid, BoundaryKind::NormalDerivative, |x, t| {
            x[0] - x[1] + 0.5 * t
        });
        write_boundary_data(&path, &data, "cafe", 3).unwrap();
        let back = read_boundary_data(&path).unwrap();
        assert_eq!(back.kind(), BoundaryKind::NormalDerivative);
        assert_eq!(back.values(), data.values());
        std::fs::remove_file(&path).unwrap();
    }
}
