//! Volumetric scan container, its on-disk format and the phantom generator.

mod io;
pub mod phantom;

pub use io::{body_path, load_volume, save_volume, VolumeHeader};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{EnFaceGeometry, Laterality};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed volume header: {0}")]
    Format(String),
    #[error("volume body truncated: header implies {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("volume invariant violated: {0}")]
    Invariant(String),
    #[error("invalid phantom specification: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Normal,
    Ppg,
    Pg,
    Unknown,
}

impl Group {
    pub fn is_glaucoma(self) -> bool {
        matches!(self, Group::Ppg | Group::Pg)
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Normal => "normal",
            Group::Ppg => "ppg",
            Group::Pg => "pg",
            Group::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: String,
    /// Years.
    pub age: f64,
    /// Millimetres.
    pub axial_length: Option<f64>,
    pub sex: Sex,
    pub group: Group,
    /// Visual-field mean deviation, dB.
    pub vf_md: Option<f64>,
    /// Visual-field pattern standard deviation, dB.
    pub vf_psd: Option<f64>,
}

impl SubjectMeta {
    pub fn validate(&self) -> Result<(), VolumeError> {
        if !(self.age > 0.0 && self.age < 130.0) {
            return Err(VolumeError::Invariant(format!("age {} outside (0, 130)", self.age)));
        }
        if let Some(ax) = self.axial_length {
            if !(ax > 15.0 && ax < 35.0) {
                return Err(VolumeError::Invariant(format!(
                    "axial length {ax} outside (15, 35)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    /// Signal strength index, 0-100.
    pub ssi: f64,
    /// Quality index, 0-10.
    pub quality_index: f64,
}

impl Quality {
    pub fn validate(&self) -> Result<(), VolumeError> {
        if !(0.0..=100.0).contains(&self.ssi) {
            return Err(VolumeError::Invariant(format!("ssi {} outside [0, 100]", self.ssi)));
        }
        if !(0.0..=10.0).contains(&self.quality_index) {
            return Err(VolumeError::Invariant(format!(
                "quality index {} outside [0, 10]",
                self.quality_index
            )));
        }
        Ok(())
    }
}

/// Sample counts along depth, fast (x) and slow (y) axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeDims {
    pub depth: usize,
    pub fast: usize,
    pub slow: usize,
}

impl VolumeDims {
    pub fn new(depth: usize, fast: usize, slow: usize) -> Self {
        Self { depth, fast, slow }
    }

    pub fn voxel_count(&self) -> usize {
        self.depth * self.fast * self.slow
    }
}

/// Linear-intensity OCT volume. Samples are stored with each A-line
/// contiguous: voxel `(z, x, y)` lives at `(y * fast + x) * depth + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanVolume {
    dims: VolumeDims,
    /// mm per voxel along depth, fast, slow.
    spacing_mm: [f64; 3],
    extent_mm: [f64; 2],
    pub laterality: Laterality,
    pub subject: SubjectMeta,
    pub quality: Quality,
    data: Vec<f32>,
}

impl ScanVolume {
    /// Builds a volume, checking every container invariant. The en-face
    /// spacing is derived from the extent.
    pub fn new(
        dims: VolumeDims,
        depth_spacing_mm: f64,
        extent_mm: [f64; 2],
        laterality: Laterality,
        subject: SubjectMeta,
        quality: Quality,
        data: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        let spacing_mm = [
            depth_spacing_mm,
            extent_mm[0] / dims.fast as f64,
            extent_mm[1] / dims.slow as f64,
        ];
        let v = Self { dims, spacing_mm, extent_mm, laterality, subject, quality, data };
        v.validate()?;
        Ok(v)
    }

    pub(crate) fn from_parts_unchecked(
        dims: VolumeDims,
        spacing_mm: [f64; 3],
        extent_mm: [f64; 2],
        laterality: Laterality,
        subject: SubjectMeta,
        quality: Quality,
        data: Vec<f32>,
    ) -> Self {
        Self { dims, spacing_mm, extent_mm, laterality, subject, quality, data }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let d = self.dims;
        if d.depth < 2 || d.fast < 2 || d.slow < 2 {
            return Err(VolumeError::Invariant(format!(
                "dimensions {}x{}x{} must be >= 2 on every axis",
                d.depth, d.fast, d.slow
            )));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Invariant("voxel spacing must be positive".into()));
        }
        if self.extent_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Invariant("en-face extent must be positive".into()));
        }
        if self.data.len() != d.voxel_count() {
            return Err(VolumeError::Invariant(format!(
                "sample count {} does not match dimensions ({})",
                self.data.len(),
                d.voxel_count()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(VolumeError::Invariant(format!(
                "intensity {} at sample {i} is negative or non-finite",
                self.data[i]
            )));
        }
        self.quality.validate()?;
        self.subject.validate()
    }

    pub fn dims(&self) -> VolumeDims {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn depth_spacing_mm(&self) -> f64 {
        self.spacing_mm[0]
    }

    pub fn extent_mm(&self) -> [f64; 2] {
        self.extent_mm
    }

    /// Axial range covered by the volume, mm.
    pub fn depth_extent_mm(&self) -> f64 {
        self.spacing_mm[0] * self.dims.depth as f64
    }

    pub fn en_face(&self) -> EnFaceGeometry {
        EnFaceGeometry::new(self.dims.fast, self.dims.slow, self.extent_mm)
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn a_line(&self, x: usize, y: usize) -> &[f32] {
        let n = self.dims.depth;
        let start = (y * self.dims.fast + x) * n;
        &self.data[start..start + n]
    }

    #[inline]
    pub fn voxel(&self, z: usize, x: usize, y: usize) -> f32 {
        self.data[(y * self.dims.fast + x) * self.dims.depth + z]
    }

    /// Returns a copy shifted `k` samples deeper (negative = shallower), with
    /// vacated samples filled by `fill`.
    pub fn shifted_axially(&self, k: isize, fill: f32) -> Self {
        let n = self.dims.depth as isize;
        let mut data = vec![fill; self.data.len()];
        for (src, dst) in self.data.chunks(n as usize).zip(data.chunks_mut(n as usize)) {
            for z in 0..n {
                let s = z - k;
                if (0..n).contains(&s) {
                    dst[z as usize] = src[s as usize];
                }
            }
        }
        Self { data, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn subject() -> SubjectMeta {
        SubjectMeta {
            subject_id: "s1".into(),
            age: 55.0,
            axial_length: Some(23.5),
            sex: Sex::Female,
            group: Group::Normal,
            vf_md: None,
            vf_psd: None,
        }
    }

    fn quality() -> Quality {
        Quality { ssi: 60.0, quality_index: 7.0 }
    }

    #[test]
    fn rejects_negative_intensity() {
        let mut data = vec![0.0f32; 8];
        data[3] = -1.0;
        let err = ScanVolume::new(
            VolumeDims::new(2, 2, 2),
            0.1,
            [1.0, 1.0],
            Laterality::Right,
            subject(),
            quality(),
            data,
        )
        .unwrap_err();
        assert!(matches!(err, VolumeError::Invariant(_)));
    }

    #[test]
    fn rejects_thin_axis() {
        let err = ScanVolume::new(
            VolumeDims::new(1, 2, 2),
            0.1,
            [1.0, 1.0],
            Laterality::Right,
            subject(),
            quality(),
            vec![0.0; 4],
        );
        assert!(err.is_err());
    }

    #[test]
    fn a_line_layout() {
        let data: Vec<f32> = (0..24).map(|v| v as f32).collect();
        let v = ScanVolume::new(
            VolumeDims::new(4, 3, 2),
            0.1,
            [1.0, 1.0],
            Laterality::Right,
            subject(),
            quality(),
            data,
        )
        .unwrap();
        assert_eq!(v.a_line(1, 1), &[16.0, 17.0, 18.0, 19.0]);
        assert_eq!(v.voxel(2, 2, 0), 10.0);
        let s = v.shifted_axially(1, 0.0);
        assert_eq!(s.a_line(1, 1), &[0.0, 16.0, 17.0, 18.0]);
    }

    #[test]
    fn covariate_ranges() {
        let mut s = subject();
        s.axial_length = Some(40.0);
        assert!(s.validate().is_err());
        s.axial_length = None;
        assert!(s.validate().is_ok());
        s.age = 0.0;
        assert!(s.validate().is_err());
    }
}
