use std::io::Read;

use serde::{Deserialize, Serialize};

use super::SuperpixelError;
use crate::geometry::{direction_from_frame, direction_to_frame, from_polar_frame, wrap_pi, EnFaceGeometry, Laterality};
use crate::grid::Grid2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryProvenance {
    DefaultModel,
    ExternalInput,
}

/// Two-parameter arcuate sweep. The angle `ψ` between the fibre course
/// (pointing away from the disc) and the outward radial direction is
///
/// `ψ(r, φ) = -a · (r / r_ref) · sin φ · (1 + cos φ) / 2`
///
/// in the right-eye frame: zero at the nasal pole (φ = 180°) and on the
/// temporal raphe (φ = 0°), antisymmetric about the raphe, and largest over
/// the temporal arcuate regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcuateModel {
    /// Peak sweep scale `a`, radians.
    pub sweep: f64,
    /// Radius at which the sweep equals `a`, mm.
    pub ref_radius: f64,
}

impl Default for ArcuateModel {
    fn default() -> Self {
        Self { sweep: 0.6, ref_radius: 1.55 }
    }
}

impl ArcuateModel {
    pub fn deviation(&self, r: f64, phi: f64) -> f64 {
        -self.sweep * (r / self.ref_radius) * phi.sin() * (1.0 + phi.cos()) * 0.5
    }
}

/// Unit fibre directions, pointing away from the disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryField {
    Model(ArcuateModel),
    /// En-face unit vectors `(vx, vy)` on a regular grid, expressed in
    /// scan coordinates of an eye with the given laterality and disc centre.
    Sampled {
        geometry: EnFaceGeometry,
        disc_center: [f64; 2],
        laterality: Laterality,
        vx: Grid2<f64>,
        vy: Grid2<f64>,
    },
}

impl Default for TrajectoryField {
    fn default() -> Self {
        TrajectoryField::Model(ArcuateModel::default())
    }
}

impl TrajectoryField {
    /// Parametric default; it is defined in the right-eye frame, so left
    /// eyes are handled by the frame mapping.
    pub fn default_trajectory() -> Self {
        Self::default()
    }

    pub fn radial() -> Self {
        TrajectoryField::Model(ArcuateModel { sweep: 0.0, ..ArcuateModel::default() })
    }

    pub fn provenance(&self) -> TrajectoryProvenance {
        match self {
            TrajectoryField::Model(_) => TrajectoryProvenance::DefaultModel,
            TrajectoryField::Sampled { .. } => TrajectoryProvenance::ExternalInput,
        }
    }

    /// Angle `ψ ∈ (-π/2, π/2]` between the fibre course and the outward
    /// radial direction at polar position `(r, φ)` (right-eye frame).
    pub fn deviation(&self, r: f64, phi: f64) -> f64 {
        match self {
            TrajectoryField::Model(m) => m.deviation(r, phi),
            TrajectoryField::Sampled { geometry, disc_center, laterality, vx, vy } => {
                let off = from_polar_frame(r, phi, *laterality);
                let f = geometry.to_index([disc_center[0] + off[0], disc_center[1] + off[1]]);
                let fx = f[0].clamp(0.0, (geometry.nx - 1) as f64);
                let fy = f[1].clamp(0.0, (geometry.ny - 1) as f64);
                let x = vx.bilinear(fx, fy).unwrap_or(0.0);
                let y = vy.bilinear(fx, fy).unwrap_or(0.0);
                if x == 0.0 && y == 0.0 {
                    return 0.0;
                }
                let psi = wrap_pi(direction_to_frame([x, y], *laterality) - phi);
                // Fibre directions are axial; take the outward-pointing sense.
                if psi > std::f64::consts::FRAC_PI_2 {
                    psi - std::f64::consts::PI
                } else if psi <= -std::f64::consts::FRAC_PI_2 {
                    psi + std::f64::consts::PI
                } else {
                    psi
                }
            }
        }
    }

    /// Unit en-face direction at polar position `(r, φ)` for an eye of the
    /// given laterality.
    pub fn direction(&self, r: f64, phi: f64, laterality: Laterality) -> [f64; 2] {
        direction_from_frame(phi + self.deviation(r, phi), laterality)
    }

    /// Samples the field onto an en-face grid around `disc_center`.
    /// Positions closer than `min_radius` to the disc centre are zero.
    pub fn sample(
        &self,
        geometry: EnFaceGeometry,
        disc_center: [f64; 2],
        laterality: Laterality,
        min_radius: f64,
    ) -> (Grid2<f64>, Grid2<f64>) {
        let mut vx = Grid2::filled(geometry.nx, geometry.ny, 0.0);
        let mut vy = Grid2::filled(geometry.nx, geometry.ny, 0.0);
        for j in 0..geometry.ny {
            for i in 0..geometry.nx {
                let p = geometry.pixel_center(i, j);
                let (r, phi) = crate::geometry::to_polar_frame(
                    [p[0] - disc_center[0], p[1] - disc_center[1]],
                    laterality,
                );
                if r < min_radius {
                    continue;
                }
                let d = self.direction(r, phi, laterality);
                vx.set(i, j, d[0]);
                vy.set(i, j, d[1]);
            }
        }
        (vx, vy)
    }

    /// Reads a field from CSV rows `x_mm,y_mm,angle_deg` covering a regular
    /// grid (any row order; a header row is optional). The angle is the
    /// en-face direction `atan2(vy, vx)` in scan coordinates.
    pub fn from_csv<R: Read>(
        reader: R,
        disc_center: [f64; 2],
        laterality: Laterality,
    ) -> Result<Self, SuperpixelError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SuperpixelError::Trajectory(e.to_string()))?;
            let parsed: Result<Vec<f64>, _> = rec.iter().take(3).map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
                _ if n == 0 => continue,
                _ => return Err(SuperpixelError::Trajectory(format!("malformed trajectory row {}", n + 1))),
            }
        }
        let axis = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            v
        };
        let xs = axis(&|r| r.0);
        let ys = axis(&|r| r.1);
        if xs.len() < 2 || ys.len() < 2 || xs.len() * ys.len() != rows.len() {
            return Err(SuperpixelError::Trajectory(format!(
                "{} rows do not form a regular {}x{} grid",
                rows.len(),
                xs.len(),
                ys.len()
            )));
        }
        let mut vx = Grid2::filled(xs.len(), ys.len(), 0.0);
        let mut vy = Grid2::filled(xs.len(), ys.len(), 0.0);
        for (x, y, a) in rows {
            let i = xs.partition_point(|&v| v < x - 1e-9);
            let j = ys.partition_point(|&v| v < y - 1e-9);
            let t = a.to_radians();
            vx.set(i, j, t.cos());
            vy.set(i, j, t.sin());
        }
        // Treat the listed positions as pixel centres of a grid whose origin
        // is half a step before the first sample.
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        let dy = (ys[ys.len() - 1] - ys[0]) / (ys.len() - 1) as f64;
        let geometry = EnFaceGeometry::new(xs.len(), ys.len(), [dx * xs.len() as f64, dy * ys.len() as f64]);
        let shift = [xs[0] - 0.5 * dx, ys[0] - 0.5 * dy];
        Ok(TrajectoryField::Sampled {
            geometry,
            disc_center: [disc_center[0] - shift[0], disc_center[1] - shift[1]],
            laterality,
            vx,
            vy,
        })
    }
}
