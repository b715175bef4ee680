//! File formats: the WLOG array container, detection interchange records,
//! dataset manifests, checkpoints, and legacy VTK export.
//!
//! Every writer goes through [`atomic_write`] (write-temp-then-rename) so a
//! crashed run never leaves a half-written artifact behind.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Read as _;
use std::path::Path;

use crate::extract::EllipseDetection;
use crate::minimodel::{Checkpoint, EpochStats};
use crate::raster::{BBox, DensityVolume, Ellipse, SliceAnnotation};
use crate::synthesis::DatasetManifest;
use crate::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"WLOG";
pub const VERSION: u16 = 1;

/// Element types the container can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    /// 32-bit little-endian float.
    F32,
    /// 64-bit little-endian float.
    F64,
    /// Raw bytes (used by checkpoints for their serialized header+weights).
    Bytes,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
            Dtype::Bytes => 2,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::Bytes => 1,
        }
    }

    fn from_code(code: u8) -> std::result::Result<Self, FormatError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::Bytes),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }
}

/// Write bytes to `path` atomically: temp file in the same directory, then
/// rename over the destination.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| Error::domain(format!("not a file path: {}", path.display())))?;
    let tmp_name = format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode_container(dtype: Dtype, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(payload);
    out
}

fn decode_container(bytes: &[u8]) -> std::result::Result<(Dtype, Vec<u32>, &[u8]), FormatError> {
    let need = |expected: usize, actual: usize| FormatError::Truncated { expected, actual };
    if bytes.len() < 8 {
        return Err(need(8, bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::UnknownVersion(version));
    }
    let dtype = Dtype::from_code(bytes[6])?;
    let ndims = bytes[7] as usize;
    let header = 8 + 4 * ndims;
    if bytes.len() < header {
        return Err(need(header, bytes.len()));
    }
    let dims: Vec<u32> = (0..ndims)
        .map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()))
        .collect();
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let expected = header + count * dtype.size();
    if bytes.len() != expected {
        return Err(need(expected, bytes.len()));
    }
    Ok((dtype, dims, &bytes[header..]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Write a voxel volume as a 3-dimensional f32 container. The container
/// carries the array only; physical extents travel with the dataset manifest.
pub fn write_volume(volume: &DensityVolume, path: &Path) -> Result<()> {
    let (nx, ny, nz) = volume.dims;
    let dims = [nx as u32, ny as u32, nz as u32];
    let mut payload = Vec::with_capacity(volume.data.len() * 4);
    for v in &volume.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &encode_container(Dtype::F32, &dims, &payload))
}

/// Read a 3-dimensional f32 container; `extent`/`height` restore the
/// physical scale the container does not carry.
pub fn read_volume(path: &Path, extent: f64, height: f64) -> Result<DensityVolume> {
    let bytes = read_file(path)?;
    let (dtype, dims, payload) = decode_container(&bytes).map_err(Error::Format)?;
    if dtype != Dtype::F32 || dims.len() != 3 {
        return Err(Error::dimension(format!(
            "expected a 3-dimensional f32 volume, got {} dims of dtype code {}",
            dims.len(),
            dtype.code()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DensityVolume {
        dims: (dims[0] as usize, dims[1] as usize, dims[2] as usize),
        extent,
        height,
        data,
    })
}

/// Write a 2D f64 grid (surface patch or half-plane) as a container.
pub fn write_grid(grid: &[f64], rows: usize, cols: usize, path: &Path) -> Result<()> {
    if grid.len() != rows * cols {
        return Err(Error::dimension("grid length does not match rows × cols"));
    }
    let mut payload = Vec::with_capacity(grid.len() * 8);
    for v in grid {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(
        path,
        &encode_container(Dtype::F64, &[rows as u32, cols as u32], &payload),
    )
}

/// Read a 2D f64 grid container: (rows, cols, data).
pub fn read_grid(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = read_file(path)?;
    let (dtype, dims, payload) = decode_container(&bytes).map_err(Error::Format)?;
    if dtype != Dtype::F64 || dims.len() != 2 {
        return Err(Error::dimension(format!(
            "expected a 2-dimensional f64 grid, got {} dims of dtype code {}",
            dims.len(),
            dtype.code()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims[0] as usize, dims[1] as usize, data))
}

/// Who produced a detection record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    GroundTruth,
    Detector,
    Tracker,
}

/// One knot observation in one slice; the interchange row shared by the
/// annotator, the detector, and the tracker. One JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub log: String,
    pub z_index: usize,
    pub bbox: BBox,
    pub ellipse: Ellipse,
    pub score: f64,
    pub source: DetectionSource,
}

impl DetectionRecord {
    pub fn from_detection(log: &str, det: &EllipseDetection, source: DetectionSource) -> Self {
        DetectionRecord {
            log: log.to_string(),
            z_index: det.z_index,
            bbox: det.bbox,
            ellipse: det.ellipse,
            score: det.score,
            source,
        }
    }

    pub fn from_annotation(log: &str, ann: &SliceAnnotation) -> Vec<Self> {
        ann.ellipses
            .iter()
            .zip(&ann.boxes)
            .map(|(e, b)| DetectionRecord {
                log: log.to_string(),
                z_index: ann.z_index,
                bbox: *b,
                ellipse: *e,
                score: 1.0,
                source: DetectionSource::GroundTruth,
            })
            .collect()
    }
}

/// Serialize records one JSON object per line.
pub fn write_detections(records: &[DetectionRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::domain(e.to_string()))?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::domain(format!("detections line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::domain(e.to_string()))?;
    atomic_write(path, json.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::domain(format!("manifest: {e}")))
}

/// Save a model checkpoint: WLOG framing with a byte payload holding the
/// serialized spec, weights, and history.
pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let payload = serde_json::to_vec(ckpt).map_err(|e| Error::domain(e.to_string()))?;
    atomic_write(
        path,
        &encode_container(Dtype::Bytes, &[payload.len() as u32], &payload),
    )
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_file(path)?;
    let (dtype, dims, payload) = decode_container(&bytes).map_err(Error::Format)?;
    if dtype != Dtype::Bytes || dims.len() != 1 {
        return Err(Error::dimension("not a checkpoint container"));
    }
    serde_json::from_slice(payload).map_err(|e| Error::domain(format!("checkpoint: {e}")))
}

/// Training history as structured text, one JSON record per epoch line.
pub fn write_history(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in history {
        out.push_str(&serde_json::to_string(e).map_err(|err| Error::domain(err.to_string()))?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochStats>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::domain(format!("history line {}: {e}", i + 1)))
        })
        .collect()
}

/// Evaluation report: `name value` per line, machine-parseable.
pub fn format_report(entries: &[(&str, f64)]) -> String {
    let mut out = String::new();
    for (name, value) in entries {
        out.push_str(&format!("{name} {value}\n"));
    }
    out
}

/// Export a volume as a legacy ASCII VTK structured-points file.
pub fn export_vtk(volume: &DensityVolume, path: &Path) -> Result<()> {
    let (nx, ny, nz) = volume.dims;
    let sx = 2.0 * volume.extent / nx as f64;
    let sy = 2.0 * volume.extent / ny as f64;
    let sz = volume.height / nz as f64;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("woodlog density volume\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_POINTS\n");
    out.push_str(&format!("DIMENSIONS {nx} {ny} {nz}\n"));
    out.push_str(&format!("SPACING {sx} {sy} {sz}\n"));
    out.push_str(&format!("ORIGIN {} {} 0\n", -volume.extent, -volume.extent));
    out.push_str(&format!("POINT_DATA {}\n", nx * ny * nz));
    out.push_str("SCALARS density float 1\n");
    out.push_str("LOOKUP_TABLE default\n");
    for row in volume.data.chunks(nx.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Re-parse an ASCII VTK structured-points file: (dims, scalars). Used as
/// the oracle that the export preserves the payload order.
pub fn read_vtk_ascii(path: &Path) -> Result<((usize, usize, usize), Vec<f32>)> {
    let text = fs::read_to_string(path)?;
    let mut dims = None;
    let mut count = None;
    let mut lines = text.lines();
    for line in lines.by_ref() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("DIMENSIONS") => {
                let d: Vec<usize> = parts.map(|p| p.parse().unwrap_or(0)).collect();
                if d.len() != 3 {
                    return Err(Error::domain("vtk: malformed DIMENSIONS"));
                }
                dims = Some((d[0], d[1], d[2]));
            }
            Some("POINT_DATA") => {
                count = parts.next().and_then(|p| p.parse().ok());
            }
            Some("LOOKUP_TABLE") => break,
            _ => {}
        }
    }
    let dims = dims.ok_or_else(|| Error::domain("vtk: missing DIMENSIONS"))?;
    let count: usize = count.ok_or_else(|| Error::domain("vtk: missing POINT_DATA"))?;
    if count != dims.0 * dims.1 * dims.2 {
        return Err(Error::domain("vtk: POINT_DATA does not match DIMENSIONS"));
    }
    let mut data = Vec::with_capacity(count);
    for line in lines {
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f32>()
                    .map_err(|e| Error::domain(format!("vtk scalar `{tok}`: {e}")))?,
            );
        }
    }
    if data.len() != count {
        return Err(Error::domain(format!(
            "vtk: expected {count} scalars, found {}",
            data.len()
        )));
    }
    Ok((dims, data))
}
