//! Nerve-fiber-layer reflectance analysis for peripapillary OCT volumes.
//!
//! The numeric core (reflectance maps, polar resampling, filtering, vessel
//! inpainting and superpixel aggregation) is generic over [`Scalar`]; the
//! aliases below fix it to `f32` or `f64`.

pub mod geometry;
pub mod grid;
pub mod normative;
pub mod pipeline;
pub mod reflectance;
pub mod rng;
pub mod scalar;
pub mod segmentation;
pub mod stats;
pub mod superpixel;
pub mod volume;

pub use geometry::Laterality;
pub use normative::{CutoffLevel, DiagnosticParameters, NormativeModel, PatternClass};
pub use pipeline::{DiagnosticReport, PipelineError, ProcessConfig, StudyConfig, StudyReport};
pub use scalar::Scalar;
pub use superpixel::{EyeFeatures, SuperpixelGrid};
pub use volume::{ScanVolume, SubjectMeta};

pub type ReflectanceMapF32 = reflectance::ReflectanceMap<f32>;
pub type ReflectanceMapF64 = reflectance::ReflectanceMap<f64>;
pub type PolarMapF32 = reflectance::PolarMap<f32>;
pub type PolarMapF64 = reflectance::PolarMap<f64>;
pub type GridF32 = grid::Grid2<f32>;
pub type GridF64 = grid::Grid2<f64>;
pub type ProcessedEyeF32 = pipeline::ProcessedEye<f32>;
pub type ProcessedEyeF64 = pipeline::ProcessedEye<f64>;
