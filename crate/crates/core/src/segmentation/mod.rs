//! Layer surfaces, disc outline and vessel mask extraction, plus harmonic
//! inpainting of en-face maps.

mod inpaint;
mod layers;
mod surfaces;
mod vessels;

pub use inpaint::{inpaint_vessels, inpaint_with, reachable_holes, InpaintOptions};
pub use layers::{segment_surfaces, SegmentationOptions};
pub use surfaces::{circle_polygon, point_in_polygon, polygon_centroid, polygon_is_simple, SurfaceSet};
pub use vessels::{detect_vessels, VesselOptions, MAX_VESSEL_FRACTION};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    InnerSurface,
    NflBottom,
    Ellipsoid,
    Bruchs,
    Disc,
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layer::InnerSurface => "inner retinal surface",
            Layer::NflBottom => "NFL posterior boundary",
            Layer::Ellipsoid => "ellipsoid zone",
            Layer::Bruchs => "Bruch's membrane",
            Layer::Disc => "optic disc",
        })
    }
}

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("segmentation failed for the {layer}: boundary not found at {percent:.1}% of positions")]
    Failure { layer: Layer, percent: f64 },
    #[error("invalid surface set: {0}")]
    Invalid(String),
    #[error("inpainting impossible: {0} masked pixels have no unmasked neighbour path")]
    InpaintImpossible(usize),
    #[error("inpainting did not converge in {0} sweeps")]
    NotConverged(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}
