//! Volume container: a JSON header at the given path plus a sidecar body of
//! little-endian `f32` samples (A-lines contiguous) at `<path>.raw`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Quality, ScanVolume, SubjectMeta, VolumeDims, VolumeError};
use crate::geometry::Laterality;

const FORMAT_TAG: &str = "nflr-volume";
const FORMAT_VERSION: u32 = 1;
const CHUNK_SAMPLES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub format: String,
    pub version: u32,
    /// `[depth, fast, slow]`.
    pub dims: [usize; 3],
    /// mm per voxel along `[depth, fast, slow]`.
    pub spacing_mm: [f64; 3],
    pub extent_mm: [f64; 2],
    pub laterality: Laterality,
    pub subject: SubjectMeta,
    pub quality: Quality,
    pub dtype: String,
    pub order: String,
    /// File name of the body, relative to the header's directory.
    pub body: String,
}

/// Location of the binary body belonging to a header path.
pub fn body_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".raw");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VolumeError + '_ {
    move |source| VolumeError::Io { path: path.display().to_string(), source }
}

pub fn save_volume(volume: &ScanVolume, path: &Path) -> Result<(), VolumeError> {
    let body = body_path(path);
    let d = volume.dims();
    let header = VolumeHeader {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        dims: [d.depth, d.fast, d.slow],
        spacing_mm: volume.spacing_mm(),
        extent_mm: volume.extent_mm(),
        laterality: volume.laterality,
        subject: volume.subject.clone(),
        quality: volume.quality,
        dtype: "float32le".into(),
        order: "depth-major".into(),
        body: body.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let text = serde_json::to_string_pretty(&header)
        .map_err(|e| VolumeError::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(io_err(path))?;

    let file = File::create(&body).map_err(io_err(&body))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(CHUNK_SAMPLES * 4);
    for chunk in volume.samples().chunks(CHUNK_SAMPLES) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err(&body))?;
    }
    w.flush().map_err(io_err(&body))
}

pub fn load_volume(path: &Path) -> Result<ScanVolume, VolumeError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| VolumeError::Format(e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(VolumeError::Format(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(VolumeError::Format(format!("unsupported version {}", header.version)));
    }
    if header.dtype != "float32le" || header.order != "depth-major" {
        return Err(VolumeError::Format(format!(
            "unsupported sample layout {}/{}",
            header.dtype, header.order
        )));
    }
    let dims = VolumeDims::new(header.dims[0], header.dims[1], header.dims[2]);
    let expected = dims
        .depth
        .checked_mul(dims.fast)
        .and_then(|v| v.checked_mul(dims.slow))
        .ok_or_else(|| VolumeError::Format("dimensions overflow".into()))?;

    let body = body_path(path);
    let file = File::open(&body).map_err(io_err(&body))?;
    let found_bytes = file.metadata().map_err(io_err(&body))?.len() as usize;
    if found_bytes < expected * 4 {
        return Err(VolumeError::Truncated { expected, found: found_bytes / 4 });
    }
    let mut r = BufReader::new(file);
    let mut data = Vec::with_capacity(expected);
    let mut buf = vec![0u8; CHUNK_SAMPLES * 4];
    while data.len() < expected {
        let n = (expected - data.len()).min(CHUNK_SAMPLES);
        let bytes = &mut buf[..n * 4];
        r.read_exact(bytes).map_err(io_err(&body))?;
        data.extend(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
    }

    let volume = ScanVolume::from_parts_unchecked(
        dims,
        header.spacing_mm,
        header.extent_mm,
        header.laterality,
        header.subject,
        header.quality,
        data,
    );
    volume.validate()?;
    Ok(volume)
}
