//! End-to-end processing: volume to superpixel features, cohort model
//! fitting, per-eye diagnosis and the study-level evaluation.

mod diagnose;
mod study;

pub use diagnose::{diagnose, DiagnosticReport, ReportProvenance};
pub use study::{run_study, ParameterKind, StudyConfig, StudyReport};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{from_polar_frame, Laterality};
use crate::normative::{fit_normative, NormativeError, NormativeModel};
use crate::reflectance::{
    annulus_mean, azimuthal_notch_filter, nfl_sum_map, normalization_constant_from_db, normalized_reflectance_map,
    ppec_mean_map, to_polar, FilterConfig, PolarGeometry, PolarMap, ReflectanceError, ReflectanceMap,
    ANALYTIC_ANNULUS_MM,
};
use crate::scalar::Scalar;
use crate::segmentation::{detect_vessels, segment_surfaces, SegmentationError, SegmentationOptions, SurfaceSet, VesselOptions};
use crate::stats::StatsError;
use crate::superpixel::{standard_grid, EyeFeatures, SuperpixelError, SuperpixelGrid, TrajectoryField};
use crate::volume::{Group, ScanVolume, VolumeError};

/// Diameter of the circumpapillary thickness circle, mm.
pub const THICKNESS_CIRCLE_DIAMETER_MM: f64 = 3.4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Reflectance(#[from] ReflectanceError),
    #[error(transparent)]
    Superpixel(#[from] SuperpixelError),
    #[error(transparent)]
    Normative(#[from] NormativeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("inputs were produced with different configurations ({0} and {1})")]
    MixedConfig(String, String),
    #[error("{subject}: {stage} failed: {source}")]
    Eye {
        subject: String,
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Eye { source, .. } => source.exit_code(),
            PipelineError::Segmentation(SegmentationError::NotConverged(_))
            | PipelineError::Normative(NormativeError::RankDeficient | NormativeError::Degenerate(_))
            | PipelineError::Stats(StatsError::Numeric(_)) => 3,
            _ => 2,
        }
    }

    fn at(self, subject: &str, stage: &'static str) -> Self {
        PipelineError::Eye { subject: subject.to_string(), stage, source: Box::new(self) }
    }
}

/// Everything that determines how a volume becomes a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub segmentation: SegmentationOptions,
    pub vessels: VesselOptions,
    pub polar: PolarGeometry,
    pub filter: FilterConfig,
    pub trajectory: TrajectoryField,
    /// Azimuth samples of the circumpapillary thickness profile.
    pub thickness_samples: usize,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationOptions::default(),
            vessels: VesselOptions::default(),
            polar: PolarGeometry::default(),
            filter: FilterConfig::default(),
            trajectory: TrajectoryField::default_trajectory(),
            thickness_samples: 256,
        }
    }
}

impl ProcessConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.polar.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let f = &self.filter;
        if f.k_az < f.notch_order || f.k_az >= self.polar.azimuth_bins / 2 {
            return Err(PipelineError::Config(format!(
                "azimuthal cut-off {} must lie in [{}, {})",
                f.k_az,
                f.notch_order,
                self.polar.azimuth_bins / 2
            )));
        }
        if let Some(k) = f.k_rad {
            if !(k > 0.0) {
                return Err(PipelineError::Config("radial cut-off must be positive".into()));
            }
        }
        if !(f.rolloff_bins >= 1.0) {
            return Err(PipelineError::Config("roll-off width must be at least one bin".into()));
        }
        if self.polar.r_min > ANALYTIC_ANNULUS_MM[0] || self.polar.r_max < ANALYTIC_ANNULUS_MM[1] {
            return Err(PipelineError::Config("polar raster must cover the analytic annulus".into()));
        }
        if self.thickness_samples < 36 {
            return Err(PipelineError::Config("thickness profile needs at least 36 samples".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, truncated to 16 characters.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<SuperpixelGrid, PipelineError> {
        Ok(standard_grid(&self.trajectory, &self.polar)?)
    }
}

/// Intermediate products of one processed eye.
#[derive(Debug, Clone)]
pub struct ProcessedEye<T> {
    pub features: EyeFeatures,
    pub surfaces: SurfaceSet,
    pub map: ReflectanceMap<T>,
    pub polar: PolarMap<T>,
    pub filtered: PolarMap<T>,
}

/// Circumpapillary NFL thickness (µm) on the 3.4 mm circle, sampled at
/// equal azimuth steps in the right-eye frame. Samples inside the disc or
/// outside the scan are NaN.
pub fn thickness_profile(surfaces: &SurfaceSet, laterality: Laterality, samples: usize) -> Vec<f64> {
    let thick = surfaces.nfl_thickness();
    let disc = surfaces.disc_mask();
    let valid = disc.map(|d| !d);
    let c = surfaces.disc_center();
    let g = surfaces.geometry;
    let r = 0.5 * THICKNESS_CIRCLE_DIAMETER_MM;
    (0..samples)
        .map(|a| {
            let phi = std::f64::consts::TAU * a as f64 / samples as f64;
            let off = from_polar_frame(r, phi, laterality);
            let f = g.to_index([c[0] + off[0], c[1] + off[1]]);
            thick.bilinear_masked(&valid, f[0], f[1]).map_or(f64::NAN, |t| 1000.0 * t)
        })
        .collect()
}

/// Segmentation, reflectance map, polar resampling, filtering and
/// superpixel aggregation of one volume, in scalar type `T`.
pub fn process_volume_as<T: Scalar>(
    volume: &ScanVolume,
    grid: &SuperpixelGrid,
    cfg: &ProcessConfig,
    normalization_constant: f64,
) -> Result<ProcessedEye<T>, PipelineError> {
    let id = volume.subject.subject_id.as_str();
    let mut surfaces = segment_surfaces(volume, &cfg.segmentation).map_err(|e| PipelineError::from(e).at(id, "segmentation"))?;
    surfaces.vessel_mask = detect_vessels(volume, &surfaces, &cfg.vessels);
    let nfl = nfl_sum_map(volume, &surfaces);
    let ppec = ppec_mean_map(volume, &surfaces);
    let reflectance = |e: ReflectanceError| PipelineError::from(e).at(id, "reflectance");
    let map: ReflectanceMap<T> =
        normalized_reflectance_map(&nfl, &ppec, &surfaces, volume.laterality, normalization_constant).map_err(reflectance)?;
    let annulus = annulus_mean(&map, ANALYTIC_ANNULUS_MM[0], ANALYTIC_ANNULUS_MM[1]).map_err(reflectance)?;
    let polar = to_polar(&map, &cfg.polar).map_err(reflectance)?;
    let filtered = azimuthal_notch_filter(&polar, &cfg.filter);
    let superpixel = |e: SuperpixelError| PipelineError::from(e).at(id, "superpixel");
    let values = grid.aggregate(&filtered).map_err(superpixel)?;
    let unfiltered = grid.aggregate(&polar).map_err(superpixel)?;
    let mut features = EyeFeatures::new(volume.subject.clone(), volume.laterality, values.iter().map(|v| v.as_f64()).collect())
        .map_err(superpixel)?;
    features.unfiltered_values = Some(unfiltered.iter().map(|v| v.as_f64()).collect());
    features.thickness_profile = Some(thickness_profile(&surfaces, volume.laterality, cfg.thickness_samples));
    features.normalization_constant = normalization_constant;
    features.annulus_mean_db = Some(annulus.as_f64());
    features.config_hash = Some(cfg.hash());
    Ok(ProcessedEye { features, surfaces, map, polar, filtered })
}

pub fn process_volume(
    volume: &ScanVolume,
    grid: &SuperpixelGrid,
    cfg: &ProcessConfig,
    normalization_constant: f64,
) -> Result<EyeFeatures, PipelineError> {
    Ok(process_volume_as::<f64>(volume, grid, cfg, normalization_constant)?.features)
}

/// Rejects feature sets produced under different processing configurations.
pub fn check_consistent(features: &[EyeFeatures]) -> Result<Option<String>, PipelineError> {
    let mut seen: Option<&String> = None;
    for f in features {
        if let Some(h) = &f.config_hash {
            match seen {
                Some(s) if s != h => return Err(PipelineError::MixedConfig(s.clone(), h.clone())),
                _ => seen = Some(h),
            }
        }
    }
    Ok(seen.cloned())
}

/// Normalization constant from the normal eyes of a cohort: the geometric
/// mean over eyes of their un-normalized annulus reflectance.
pub fn cohort_normalization_constant(features: &[EyeFeatures]) -> Result<f64, PipelineError> {
    let raw: Vec<f64> = features
        .iter()
        .filter(|f| f.subject.group == Group::Normal)
        .map(|f| {
            f.raw_annulus_mean_db().ok_or_else(|| {
                PipelineError::Config(format!("{} lacks an annulus mean", f.subject.subject_id))
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(normalization_constant_from_db(&raw)?)
}

/// Normalizes the training eyes to their own population constant and fits
/// the normative model on them.
pub fn fit_cohort_model(training: &[EyeFeatures], seed: u64) -> Result<NormativeModel, PipelineError> {
    let hash = check_consistent(training)?;
    let c = cohort_normalization_constant(training)?;
    let normalized: Vec<EyeFeatures> = training.iter().map(|f| f.renormalized(c)).collect();
    let mut model = fit_normative(&normalized, c, seed)?;
    model.provenance.config_hash = hash;
    Ok(model)
}
