use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ReflectanceError;
use crate::geometry::{EnFaceGeometry, Laterality};
use crate::grid::Grid2;
use crate::scalar::Scalar;
use crate::segmentation::{inpaint_vessels, reachable_holes, SurfaceSet};
use crate::volume::ScanVolume;

/// Largest fraction of non-disc positions that may be invalid before a
/// reflectance map is rejected.
pub const MAX_INVALID_FRACTION: f64 = 0.20;

/// En-face map with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedGrid<T> {
    pub values: Grid2<T>,
    pub valid: Grid2<bool>,
}

/// Normalized NFL reflectance (dB) or the underlying linear ratio on the
/// en-face grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceMap<T> {
    pub values: Grid2<T>,
    /// False inside the disc polygon and wherever the map is undefined.
    pub valid: Grid2<bool>,
    pub disc_center: [f64; 2],
    pub geometry: EnFaceGeometry,
    pub laterality: Laterality,
}

impl<T: Scalar> ReflectanceMap<T> {
    /// Adds `offset` to every valid value.
    pub fn shifted(&self, offset: T) -> Self {
        let mut out = self.clone();
        for (v, &ok) in out.values.as_mut_slice().iter_mut().zip(self.valid.as_slice()) {
            if ok {
                *v += offset;
            }
        }
        out
    }

    /// Same map seen as the opposite eye: rows reversed, disc centre
    /// reflected, laterality swapped.
    pub fn mirrored(&self) -> Self {
        let lat = match self.laterality {
            Laterality::Right => Laterality::Left,
            Laterality::Left => Laterality::Right,
        };
        Self {
            values: self.values.flip_x(),
            valid: self.valid.flip_x(),
            disc_center: [self.geometry.extent_mm[0] - self.disc_center[0], self.disc_center[1]],
            geometry: self.geometry,
            laterality: lat,
        }
    }
}

/// First and one-past-last sample whose centre lies in `[a, b)` mm.
#[inline]
fn sample_range(a: f64, b: f64, dz: f64, n: usize) -> (usize, usize) {
    let lo = (a / dz - 0.5).ceil().max(0.0) as usize;
    let hi = (b / dz - 0.5).ceil().max(0.0) as usize;
    (lo.min(n), hi.min(n))
}

/// Axial sum of linear intensity over samples whose centres lie in
/// `[nfl_top, nfl_bottom)`.
pub fn nfl_sum_map(volume: &ScanVolume, surfaces: &SurfaceSet) -> Grid2<f64> {
    let g = surfaces.geometry;
    let dz = volume.depth_spacing_mm();
    let n = volume.dims().depth;
    let values: Vec<f64> = (0..g.nx * g.ny)
        .into_par_iter()
        .map(|k| {
            let (lo, hi) =
                sample_range(surfaces.nfl_top.as_slice()[k], surfaces.nfl_bottom.as_slice()[k], dz, n);
            let line = volume.a_line(k % g.nx, k / g.nx);
            line[lo..hi.max(lo)].iter().map(|&v| v as f64).sum()
        })
        .collect();
    Grid2::from_vec(g.nx, g.ny, values).expect("shape")
}

/// Axial mean of linear intensity over samples whose centres lie in
/// `[ez_anterior, bruchs)`. Positions with an empty band are invalid.
pub fn ppec_mean_map(volume: &ScanVolume, surfaces: &SurfaceSet) -> MaskedGrid<f64> {
    let g = surfaces.geometry;
    let dz = volume.depth_spacing_mm();
    let n = volume.dims().depth;
    let values: Vec<(f64, bool)> = (0..g.nx * g.ny)
        .into_par_iter()
        .map(|k| {
            let (lo, hi) =
                sample_range(surfaces.ez_anterior.as_slice()[k], surfaces.bruchs.as_slice()[k], dz, n);
            if hi <= lo {
                return (0.0, false);
            }
            let line = volume.a_line(k % g.nx, k / g.nx);
            let s: f64 = line[lo..hi].iter().map(|&v| v as f64).sum();
            (s / (hi - lo) as f64, true)
        })
        .collect();
    MaskedGrid {
        values: Grid2::from_vec(g.nx, g.ny, values.iter().map(|v| v.0).collect()).expect("shape"),
        valid: Grid2::from_vec(g.nx, g.ny, values.iter().map(|v| v.1).collect()).expect("shape"),
    }
}

/// NFL-to-PPEC ratio with vessel positions inpainted and the disc masked.
pub fn ratio_map<T: Scalar>(
    nfl_sum: &Grid2<f64>,
    ppec_mean: &MaskedGrid<f64>,
    surfaces: &SurfaceSet,
    laterality: Laterality,
) -> Result<ReflectanceMap<T>, ReflectanceError> {
    let g = surfaces.geometry;
    if !nfl_sum.same_shape(&ppec_mean.values) || nfl_sum.nx() != g.nx || nfl_sum.ny() != g.ny {
        return Err(ReflectanceError::Precondition("map shapes differ from the surface grid".into()));
    }
    let disc = surfaces.disc_mask();
    let mut valid = Grid2::filled(g.nx, g.ny, false);
    let mut ratio = Grid2::filled(g.nx, g.ny, T::nan());
    let mut outside = 0usize;
    let mut invalid = 0usize;
    for k in 0..g.nx * g.ny {
        if disc.as_slice()[k] {
            continue;
        }
        outside += 1;
        let p = ppec_mean.values.as_slice()[k];
        let s = nfl_sum.as_slice()[k];
        if ppec_mean.valid.as_slice()[k] && p > 0.0 && s > 0.0 && (s / p).is_finite() {
            ratio.as_mut_slice()[k] = T::lit(s / p);
            valid.as_mut_slice()[k] = true;
        } else if !surfaces.vessel_mask.as_slice()[k] {
            invalid += 1;
        }
    }
    if outside == 0 || invalid as f64 > MAX_INVALID_FRACTION * outside as f64 {
        return Err(ReflectanceError::MapQuality {
            percent: 100.0 * invalid as f64 / outside.max(1) as f64,
        });
    }
    // Vessel pixels cut off from every valid pixel stay invalid.
    let vessels = Grid2::from_fn(g.nx, g.ny, |i, j| *surfaces.vessel_mask.get(i, j) && !*disc.get(i, j));
    let holes = reachable_holes(&ratio, &vessels);
    let filled = inpaint_vessels(&ratio, &holes)?;
    for k in 0..g.nx * g.ny {
        if holes.as_slice()[k] {
            valid.as_mut_slice()[k] = filled.as_slice()[k].is_finite();
        }
    }
    Ok(ReflectanceMap {
        values: filled,
        valid,
        disc_center: surfaces.disc_center(),
        geometry: g,
        laterality,
    })
}

/// `10·log10(ratio / normalization_constant)` on every valid pixel.
pub fn to_db<T: Scalar>(ratio: &ReflectanceMap<T>, normalization_constant: f64) -> Result<ReflectanceMap<T>, ReflectanceError> {
    if !(normalization_constant > 0.0 && normalization_constant.is_finite()) {
        return Err(ReflectanceError::Precondition(format!(
            "normalization constant {normalization_constant} must be positive"
        )));
    }
    let c = T::lit(normalization_constant);
    let ten = T::lit(10.0);
    let mut out = ratio.clone();
    for (v, &ok) in out.values.as_mut_slice().iter_mut().zip(ratio.valid.as_slice()) {
        *v = if ok { ten * (*v / c).log10() } else { T::nan() };
    }
    Ok(out)
}

pub fn normalized_reflectance_map<T: Scalar>(
    nfl_sum: &Grid2<f64>,
    ppec_mean: &MaskedGrid<f64>,
    surfaces: &SurfaceSet,
    laterality: Laterality,
    normalization_constant: f64,
) -> Result<ReflectanceMap<T>, ReflectanceError> {
    to_db(&ratio_map(nfl_sum, ppec_mean, surfaces, laterality)?, normalization_constant)
}

/// Mean of valid pixels whose centres lie at `r ∈ [r_min, r_max]` mm from
/// the disc centre.
pub fn annulus_mean<T: Scalar>(map: &ReflectanceMap<T>, r_min: f64, r_max: f64) -> Result<T, ReflectanceError> {
    let g = map.geometry;
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !*map.valid.get(i, j) {
                continue;
            }
            let p = g.pixel_center(i, j);
            let r = (p[0] - map.disc_center[0]).hypot(p[1] - map.disc_center[1]);
            if r >= r_min && r <= r_max {
                sum += map.values.get(i, j).as_f64();
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(ReflectanceError::EmptyAnnulus { r_min, r_max });
    }
    Ok(T::lit(sum / n as f64))
}

/// Normalization constant (linear) from un-normalized dB maps of normal
/// eyes: `10^(m/10)` where `m` is the mean over eyes of the annulus means.
/// Normalizing each eye by it makes the cohort mean of annulus means 0 dB.
pub fn normalization_constant_from_db(annulus_means_db: &[f64]) -> Result<f64, ReflectanceError> {
    if annulus_means_db.is_empty() || annulus_means_db.iter().any(|v| !v.is_finite()) {
        return Err(ReflectanceError::Precondition(
            "normalization needs at least one finite annulus mean".into(),
        ));
    }
    let m = annulus_means_db.iter().sum::<f64>() / annulus_means_db.len() as f64;
    Ok(10f64.powf(m / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::circle_polygon;

    fn surfaces(nx: usize, ny: usize, top: f64, bottom: f64, ez: f64, bm: f64) -> SurfaceSet {
        let g = EnFaceGeometry::new(nx, ny, [4.5, 4.5]);
        SurfaceSet {
            geometry: g,
            nfl_top: Grid2::filled(nx, ny, top),
            nfl_bottom: Grid2::filled(nx, ny, bottom),
            ez_anterior: Grid2::filled(nx, ny, ez),
            bruchs: Grid2::filled(nx, ny, bm),
            disc_polygon: circle_polygon([2.25, 2.25], 0.5, 64),
            vessel_mask: Grid2::filled(nx, ny, false),
        }
    }

    fn volume(depth: usize, nx: usize, f: impl Fn(usize) -> f32) -> ScanVolume {
        let data: Vec<f32> = (0..depth * nx * nx).map(|k| f(k % depth)).collect();
        ScanVolume::new(
            crate::volume::VolumeDims::new(depth, nx, nx),
            0.1,
            [4.5, 4.5],
            Laterality::Right,
            crate::volume::SubjectMeta {
                subject_id: "m".into(),
                age: 50.0,
                axial_length: None,
                sex: crate::volume::Sex::Unspecified,
                group: crate::volume::Group::Normal,
                vf_md: None,
                vf_psd: None,
            },
            crate::volume::Quality { ssi: 60.0, quality_index: 7.0 },
            data,
        )
        .unwrap()
    }

    #[test]
    fn band_sums_and_means() {
        // NFL samples 5..15 at 2.0; PPEC samples 20..25 = 1..5.
        let v = volume(30, 4, |z| match z {
            5..=14 => 2.0,
            20..=24 => (z - 19) as f32,
            _ => 0.0,
        });
        let s = surfaces(4, 4, 0.5, 1.5, 2.0, 2.5);
        let sum = nfl_sum_map(&v, &s);
        assert!(sum.as_slice().iter().all(|&x| (x - 20.0).abs() < 1e-12));
        let ppec = ppec_mean_map(&v, &s);
        assert!(ppec.values.as_slice().iter().all(|&x| (x - 3.0).abs() < 1e-12));

        let empty = surfaces(4, 4, 0.5, 0.5, 2.0, 2.0);
        assert!(nfl_sum_map(&v, &empty).as_slice().iter().all(|&x| x == 0.0));
        assert!(ppec_mean_map(&v, &empty).valid.as_slice().iter().all(|&ok| !ok));
    }

    #[test]
    fn constant_volume_gives_constant_ppec() {
        let v = volume(30, 4, |_| 0.7);
        let s = surfaces(4, 4, 0.5, 1.5, 2.0, 2.5);
        assert!(ppec_mean_map(&v, &s).values.as_slice().iter().all(|&x| (x - 0.7f32 as f64).abs() < 1e-12));
    }

    #[test]
    fn normalization_arithmetic() {
        let s = surfaces(32, 32, 0.5, 1.5, 2.0, 2.5);
        let nfl = Grid2::filled(32, 32, 6.0);
        let ppec = MaskedGrid { values: Grid2::filled(32, 32, 2.0), valid: Grid2::filled(32, 32, true) };
        let m: ReflectanceMap<f64> = normalized_reflectance_map(&nfl, &ppec, &s, Laterality::Right, 3.0).unwrap();
        let disc = s.disc_mask();
        for k in 0..m.values.len() {
            assert_eq!(m.valid.as_slice()[k], !disc.as_slice()[k]);
            if m.valid.as_slice()[k] {
                assert!(m.values.as_slice()[k].abs() < 1e-12);
            }
        }
        let m2: ReflectanceMap<f64> = normalized_reflectance_map(&nfl, &ppec, &s, Laterality::Right, 1.5).unwrap();
        let k = m2.valid.as_slice().iter().position(|&v| v).unwrap();
        assert!((m2.values.as_slice()[k] - 3.010299956639812).abs() < 1e-12);
    }

    #[test]
    fn too_many_invalid_pixels_is_quality_error() {
        let s = surfaces(16, 16, 0.5, 1.5, 2.0, 2.5);
        let nfl = Grid2::filled(16, 16, 6.0);
        let mut ppec = MaskedGrid { values: Grid2::filled(16, 16, 2.0), valid: Grid2::filled(16, 16, true) };
        for y in 0..5 {
            for x in 0..16 {
                ppec.values.set(x, y, 0.0);
            }
        }
        let r: Result<ReflectanceMap<f64>, _> = ratio_map(&nfl, &ppec, &s, Laterality::Right);
        assert!(matches!(r, Err(ReflectanceError::MapQuality { .. })));
    }

    #[test]
    fn annulus_mean_of_radial_ramp() {
        let g = EnFaceGeometry::new(400, 400, [4.5, 4.5]);
        let c = [2.25, 2.25];
        let values = Grid2::from_fn(400, 400, |i, j| {
            let p = g.pixel_center(i, j);
            (p[0] - c[0]).hypot(p[1] - c[1])
        });
        let map = ReflectanceMap {
            values,
            valid: Grid2::filled(400, 400, true),
            disc_center: c,
            geometry: g,
            laterality: Laterality::Right,
        };
        let (a, b) = (1.1f64, 2.0f64);
        let analytic = 2.0 / 3.0 * (b.powi(3) - a.powi(3)) / (b * b - a * a);
        let got = annulus_mean(&map, a, b).unwrap();
        assert!((got - analytic).abs() / analytic < 0.005);

        let mut blank = map.clone();
        blank.valid = Grid2::filled(400, 400, false);
        assert!(annulus_mean(&blank, a, b).is_err());
    }

    #[test]
    fn normalization_constant_centres_cohort() {
        let means = [0.4, -1.2, 2.0, 0.1];
        let c = normalization_constant_from_db(&means).unwrap();
        let shift = 10.0 * c.log10();
        let centred: f64 = means.iter().map(|m| m - shift).sum::<f64>() / 4.0;
        assert!(centred.abs() < 1e-12);
    }
}
