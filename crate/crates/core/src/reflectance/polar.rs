use serde::{Deserialize, Serialize};

use super::{ReflectanceError, ReflectanceMap};
use crate::geometry::from_polar_frame;
use crate::grid::Grid2;
use crate::scalar::Scalar;

/// Sampling of the polar raster: `azimuth_bins` columns starting at the
/// temporal horizontal and increasing superiorly (right-eye convention),
/// `radius_bins` rows (rings) covering `[r_min, r_max]` mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGeometry {
    pub azimuth_bins: usize,
    pub radius_bins: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for PolarGeometry {
    fn default() -> Self {
        Self { azimuth_bins: 256, radius_bins: 64, r_min: 0.6, r_max: 2.25 }
    }
}

impl PolarGeometry {
    pub fn validate(&self) -> Result<(), ReflectanceError> {
        if self.azimuth_bins < 64 || self.azimuth_bins % 2 != 0 {
            return Err(ReflectanceError::Precondition(format!(
                "azimuth bins must be even and >= 64, got {}",
                self.azimuth_bins
            )));
        }
        if self.radius_bins < 2 || !(self.r_min >= 0.0 && self.r_max > self.r_min) {
            return Err(ReflectanceError::Precondition("invalid radial sampling".into()));
        }
        Ok(())
    }

    /// Azimuth of bin `a`, radians. Bins are centred on multiples of
    /// `2π / A`, so bin 0 is exactly temporal.
    #[inline]
    pub fn azimuth(&self, a: usize) -> f64 {
        std::f64::consts::TAU * a as f64 / self.azimuth_bins as f64
    }

    #[inline]
    pub fn radial_step(&self) -> f64 {
        (self.r_max - self.r_min) / self.radius_bins as f64
    }

    /// Radius of ring `k` (bin centre), mm.
    #[inline]
    pub fn radius(&self, k: usize) -> f64 {
        self.r_min + (k as f64 + 0.5) * self.radial_step()
    }
}

/// Polar raster: row `k` is ring `k`, column `a` is azimuth bin `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarMap<T> {
    pub geometry: PolarGeometry,
    pub values: Grid2<T>,
    pub valid: Grid2<bool>,
}

impl<T: Scalar> PolarMap<T> {
    pub fn from_fn(geometry: PolarGeometry, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let values = Grid2::from_fn(geometry.azimuth_bins, geometry.radius_bins, |a, k| {
            f(geometry.radius(k), geometry.azimuth(a))
        });
        Self {
            geometry,
            values,
            valid: Grid2::filled(geometry.azimuth_bins, geometry.radius_bins, true),
        }
    }

    pub fn ring(&self, k: usize) -> &[T] {
        self.values.row(k)
    }
}

/// Bilinear resampling of an en-face map around its disc centre. Left eyes
/// are sampled mirrored so the result is in right-eye orientation. Bins
/// whose interpolation touches an invalid pixel, or that fall outside the
/// scan, are invalid.
pub fn to_polar<T: Scalar>(map: &ReflectanceMap<T>, geometry: &PolarGeometry) -> Result<PolarMap<T>, ReflectanceError> {
    geometry.validate()?;
    let half = 0.5 * map.geometry.extent_mm[0].min(map.geometry.extent_mm[1]);
    if geometry.r_max > half + 1e-12 {
        return Err(ReflectanceError::Precondition(format!(
            "r_max {} exceeds half the scan extent ({half})",
            geometry.r_max
        )));
    }
    let (na, nr) = (geometry.azimuth_bins, geometry.radius_bins);
    let mut values = Grid2::filled(na, nr, T::nan());
    let mut valid = Grid2::filled(na, nr, false);
    for k in 0..nr {
        let r = geometry.radius(k);
        for a in 0..na {
            let off = from_polar_frame(r, geometry.azimuth(a), map.laterality);
            let p = [map.disc_center[0] + off[0], map.disc_center[1] + off[1]];
            let f = map.geometry.to_index(p);
            if let Some(v) = map.values.bilinear_masked(&map.valid, T::lit(f[0]), T::lit(f[1])) {
                values.set(a, k, v);
                valid.set(a, k, true);
            }
        }
    }
    Ok(PolarMap { geometry: *geometry, values, valid })
}
