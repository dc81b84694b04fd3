//! En-face coordinate conventions.
//!
//! En-face positions are in millimetres with the origin at the top-left
//! corner of the scan: `x` runs along the fast axis (image columns), `y` along
//! the slow axis (image rows, increasing inferiorly). Pixel `(i, j)` has its
//! centre at `((i + 0.5) dx, (j + 0.5) dy)`.
//!
//! Polar positions around the disc always use the right-eye convention:
//! azimuth 0 points temporally, 90° superiorly, 180° nasally and 270°
//! inferiorly. For a right eye temporal is `-x`; for a left eye it is `+x`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Right,
    Left,
}

impl Laterality {
    /// Sign applied to en-face `x` offsets so that temporal maps to `-x`
    /// in the right-eye frame.
    #[inline]
    pub fn x_sign(self) -> f64 {
        match self {
            Laterality::Right => 1.0,
            Laterality::Left => -1.0,
        }
    }
}

/// Sampling of an en-face plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnFaceGeometry {
    pub nx: usize,
    pub ny: usize,
    pub extent_mm: [f64; 2],
}

impl EnFaceGeometry {
    pub fn new(nx: usize, ny: usize, extent_mm: [f64; 2]) -> Self {
        Self { nx, ny, extent_mm }
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.extent_mm[0] / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.extent_mm[1] / self.ny as f64
    }

    /// Centre of pixel `(i, j)` in mm.
    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy()]
    }

    /// Fractional pixel index of a position in mm (inverse of
    /// [`pixel_center`](Self::pixel_center)).
    #[inline]
    pub fn to_index(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] / self.dx() - 0.5, p[1] / self.dy() - 0.5]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= self.extent_mm[0] && p[1] <= self.extent_mm[1]
    }
}

/// Radius (mm) and right-eye-convention azimuth (radians, `[0, 2π)`) of an
/// en-face offset from the disc centre.
#[inline]
pub fn to_polar_frame(offset: [f64; 2], laterality: Laterality) -> (f64, f64) {
    let r = offset[0].hypot(offset[1]);
    let phi = (-offset[1]).atan2(-laterality.x_sign() * offset[0]);
    (r, phi.rem_euclid(std::f64::consts::TAU))
}

/// En-face offset from the disc centre for a polar position in the
/// right-eye frame.
#[inline]
pub fn from_polar_frame(r: f64, phi: f64, laterality: Laterality) -> [f64; 2] {
    [-laterality.x_sign() * r * phi.cos(), -r * phi.sin()]
}

/// Unit en-face vector for a direction given as an angle in the right-eye
/// polar frame (0 = temporal, π/2 = superior).
#[inline]
pub fn direction_from_frame(angle: f64, laterality: Laterality) -> [f64; 2] {
    from_polar_frame(1.0, angle, laterality)
}

/// Angle in the right-eye polar frame of an en-face direction vector.
#[inline]
pub fn direction_to_frame(v: [f64; 2], laterality: Laterality) -> f64 {
    to_polar_frame(v, laterality).1
}

/// Wraps an angle difference into `(-π, π]`.
#[inline]
pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
