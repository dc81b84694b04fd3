//! Equal-flux superpixel grid over the peripapillary annulus.

mod grid;
mod trajectory;

pub use grid::{
    build_grid, flux_tracks, SuperpixelGrid, TrackSkeleton, DEFAULT_SEGMENTS, DEFAULT_TRACKS,
    FLUX_REFERENCE_RADIUS_MM,
};
pub use trajectory::{ArcuateModel, TrajectoryField, TrajectoryProvenance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Laterality;
use crate::reflectance::{PolarGeometry, ANALYTIC_ANNULUS_MM};
use crate::volume::phantom::ThicknessModel;
use crate::volume::SubjectMeta;

#[derive(Debug, Error)]
pub enum SuperpixelError {
    #[error("superpixel grid: {0}")]
    Grid(String),
    #[error("superpixel {0} has no valid polar bin")]
    EmptyCell(usize),
    #[error("trajectory field: {0}")]
    Trajectory(String),
    #[error("eye features: {0}")]
    Features(String),
}

/// Per-eye superpixel reflectance vector with its subject metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeFeatures {
    pub subject: SubjectMeta,
    pub laterality: Laterality,
    /// Filtered superpixel reflectance, dB, cell order `track · 5 + segment`.
    pub superpixel_values: Vec<f64>,
    /// Same aggregation without the azimuthal filter, dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unfiltered_values: Option<Vec<f64>>,
    /// Circumpapillary NFL thickness on the 3.4 mm circle, µm, sampled at
    /// equal azimuth steps from 0° in the right-eye frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_profile: Option<Vec<f64>>,
    /// Linear normalization constant the dB values are referred to.
    #[serde(default = "unit_constant")]
    pub normalization_constant: f64,
    /// Mean of the normalized map over the analytic annulus, dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annulus_mean_db: Option<f64>,
    /// Hash of the processing configuration that produced the values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn unit_constant() -> f64 {
    1.0
}

impl EyeFeatures {
    pub fn new(subject: SubjectMeta, laterality: Laterality, superpixel_values: Vec<f64>) -> Result<Self, SuperpixelError> {
        let f = Self {
            subject,
            laterality,
            superpixel_values,
            unfiltered_values: None,
            thickness_profile: None,
            normalization_constant: 1.0,
            annulus_mean_db: None,
            config_hash: None,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), SuperpixelError> {
        let n = self.superpixel_values.len();
        if n == 0 || self.superpixel_values.iter().any(|v| !v.is_finite()) {
            return Err(SuperpixelError::Features(format!(
                "{}: superpixel values must be non-empty and finite",
                self.subject.subject_id
            )));
        }
        if let Some(u) = &self.unfiltered_values {
            if u.len() != n || u.iter().any(|v| !v.is_finite()) {
                return Err(SuperpixelError::Features(format!(
                    "{}: unfiltered values malformed",
                    self.subject.subject_id
                )));
            }
        }
        Ok(())
    }

    /// Copy with every reflectance value shifted by `delta_db`.
    pub fn shifted(&self, delta_db: f64) -> Self {
        let mut out = self.clone();
        out.superpixel_values.iter_mut().for_each(|v| *v += delta_db);
        if let Some(u) = &mut out.unfiltered_values {
            u.iter_mut().for_each(|v| *v += delta_db);
        }
        if let Some(a) = &mut out.annulus_mean_db {
            *a += delta_db;
        }
        out
    }

    /// Values re-expressed against another normalization constant. The
    /// filter and the cell means commute with a constant dB offset, so this
    /// equals reprocessing with `constant`.
    pub fn renormalized(&self, constant: f64) -> Self {
        let mut out = self.shifted(-10.0 * (constant / self.normalization_constant).log10());
        out.normalization_constant = constant;
        out
    }

    /// Annulus mean of the map before normalization (constant 1), dB.
    pub fn raw_annulus_mean_db(&self) -> Option<f64> {
        self.annulus_mean_db.map(|a| a + 10.0 * self.normalization_constant.log10())
    }
}

/// The standard 32 × 5 grid: flux from the reference thickness model along
/// the given trajectory field, on the default polar raster.
pub fn standard_grid(trajectory: &TrajectoryField, polar: &PolarGeometry) -> Result<SuperpixelGrid, SuperpixelError> {
    let model = ThicknessModel::default();
    let skeleton = flux_tracks(&|r, phi| model.thickness_mm(r, phi), trajectory, DEFAULT_TRACKS, ANALYTIC_ANNULUS_MM)?;
    build_grid(&skeleton, polar, ANALYTIC_ANNULUS_MM, DEFAULT_SEGMENTS)
}
