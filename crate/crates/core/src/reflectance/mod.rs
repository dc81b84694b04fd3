//! Normalized NFL reflectance maps, polar resampling, the azimuthal notch
//! filter and incidence-angle analysis.

mod export;
mod filter;
mod incidence;
mod maps;
mod polar;

pub use export::{write_polar_csv, write_polar_pgm, PGM_DB_RANGE};
pub use filter::{azimuthal_notch_filter, fill_invalid, FilterConfig};
pub use incidence::{
    azimuthal_harmonics, incidence_angle_profile, relative_fit_residual, Harmonic, IncidenceProfile,
    INCIDENCE_STEP_MM,
};
pub use maps::{
    annulus_mean, nfl_sum_map, normalization_constant_from_db, normalized_reflectance_map, ppec_mean_map,
    ratio_map, to_db, MaskedGrid, ReflectanceMap, MAX_INVALID_FRACTION,
};
pub use polar::{to_polar, PolarGeometry, PolarMap};

use thiserror::Error;

use crate::segmentation::SegmentationError;

/// Inner and outer radius of the analytic annulus, mm.
pub const ANALYTIC_ANNULUS_MM: [f64; 2] = [1.1, 2.0];

#[derive(Debug, Error)]
pub enum ReflectanceError {
    #[error("reflectance map quality: {percent:.1}% of positions invalid")]
    MapQuality { percent: f64 },
    #[error("annulus {r_min}-{r_max} mm contains no valid pixel")]
    EmptyAnnulus { r_min: f64, r_max: f64 },
    #[error("incidence circle intersects the disc")]
    DiscIntersection,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
}
