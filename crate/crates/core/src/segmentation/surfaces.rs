use serde::{Deserialize, Serialize};

use super::SegmentationError;
use crate::geometry::EnFaceGeometry;
use crate::grid::Grid2;

/// Per-A-line layer boundaries (depths in mm, increasing posteriorly), the
/// disc outline and the large-vessel mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSet {
    pub geometry: EnFaceGeometry,
    pub nfl_top: Grid2<f64>,
    pub nfl_bottom: Grid2<f64>,
    pub ez_anterior: Grid2<f64>,
    pub bruchs: Grid2<f64>,
    /// Closed polygon in en-face mm coordinates (last vertex connects to the
    /// first).
    pub disc_polygon: Vec<[f64; 2]>,
    pub vessel_mask: Grid2<bool>,
}

impl SurfaceSet {
    /// Pixels whose centre lies inside the disc polygon.
    pub fn disc_mask(&self) -> Grid2<bool> {
        let g = self.geometry;
        Grid2::from_fn(g.nx, g.ny, |i, j| point_in_polygon(g.pixel_center(i, j), &self.disc_polygon))
    }

    /// Area centroid of the disc polygon.
    pub fn disc_center(&self) -> [f64; 2] {
        polygon_centroid(&self.disc_polygon)
    }

    /// NFL thickness (mm) per en-face position.
    pub fn nfl_thickness(&self) -> Grid2<f64> {
        Grid2::from_vec(
            self.geometry.nx,
            self.geometry.ny,
            self.nfl_top
                .as_slice()
                .iter()
                .zip(self.nfl_bottom.as_slice())
                .map(|(t, b)| b - t)
                .collect(),
        )
        .expect("same shape")
    }

    /// Checks the ordering, range and polygon invariants against an axial
    /// extent of `depth_extent_mm`.
    pub fn validate(&self, depth_extent_mm: f64) -> Result<(), SegmentationError> {
        let g = self.geometry;
        for grid in [&self.nfl_top, &self.nfl_bottom, &self.ez_anterior, &self.bruchs] {
            if grid.nx() != g.nx || grid.ny() != g.ny {
                return Err(SegmentationError::Invalid("surface grid shape mismatch".into()));
            }
        }
        if self.vessel_mask.nx() != g.nx || self.vessel_mask.ny() != g.ny {
            return Err(SegmentationError::Invalid("vessel mask shape mismatch".into()));
        }
        if self.disc_polygon.len() < 3 || !polygon_is_simple(&self.disc_polygon) {
            return Err(SegmentationError::Invalid("disc polygon is not a simple polygon".into()));
        }
        let c = self.disc_center();
        if !point_in_polygon(c, &self.disc_polygon) {
            return Err(SegmentationError::Invalid("disc polygon does not contain its centre".into()));
        }
        let disc = self.disc_mask();
        for k in 0..g.nx * g.ny {
            let s = [
                self.nfl_top.as_slice()[k],
                self.nfl_bottom.as_slice()[k],
                self.ez_anterior.as_slice()[k],
                self.bruchs.as_slice()[k],
            ];
            if s.iter().any(|&d| !(d >= 0.0 && d <= depth_extent_mm)) {
                return Err(SegmentationError::Invalid(format!(
                    "surface depth outside axial extent at pixel {k}"
                )));
            }
            if !disc.as_slice()[k] && !(s[0] <= s[1] && s[1] <= s[2] && s[2] <= s[3]) {
                return Err(SegmentationError::Invalid(format!(
                    "layer ordering violated at pixel {k}"
                )));
            }
        }
        Ok(())
    }
}

pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn polygon_centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let n = poly.len();
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = a[0] * b[1] - b[0] * a[1];
        area2 += cross;
        cx += (a[0] + b[0]) * cross;
        cy += (a[1] + b[1]) * cross;
    }
    if area2.abs() < 1e-15 {
        let m = poly.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        return [m[0] / n as f64, m[1] / n as f64];
    }
    [cx / (3.0 * area2), cy / (3.0 * area2)]
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        let v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if v > 1e-15 {
            1
        } else if v < -1e-15 {
            -1
        } else {
            0
        }
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0 && d3 * d4 < 0
}

/// True when no two non-adjacent edges intersect.
pub fn polygon_is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a1, a2, poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Regular polygon approximating a circle.
pub fn circle_polygon(center: [f64; 2], radius: f64, vertices: usize) -> Vec<[f64; 2]> {
    (0..vertices)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / vertices as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_predicates() {
        let sq = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([1.5, 0.5], &sq));
        assert!(polygon_is_simple(&sq));
        let bow = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!polygon_is_simple(&bow));
        let c = polygon_centroid(&sq);
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
        let circ = circle_polygon([2.0, 3.0], 0.8, 64);
        assert!(polygon_is_simple(&circ));
        let cc = polygon_centroid(&circ);
        assert!((cc[0] - 2.0).abs() < 1e-9 && (cc[1] - 3.0).abs() < 1e-9);
    }
}
