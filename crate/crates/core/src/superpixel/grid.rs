use serde::{Deserialize, Serialize};

use super::{SuperpixelError, TrajectoryField};
use crate::reflectance::{PolarGeometry, PolarMap};
use crate::scalar::Scalar;

pub const DEFAULT_TRACKS: usize = 32;
pub const DEFAULT_SEGMENTS: usize = 5;
pub const FLUX_REFERENCE_RADIUS_MM: f64 = 1.55;

/// Samples on the reference circle used for flux integration.
const FLUX_SAMPLES: usize = 8192;
/// Integration steps per mm along a streamline.
const STREAM_STEPS_PER_MM: f64 = 200.0;

/// Track seeds on the reference circle: `seeds[t]` is the azimuth
/// (right-eye frame, radians) where track `t` begins, counter-clockwise.
/// `seeds[0]` sits on the temporal raphe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSkeleton {
    pub seeds: Vec<f64>,
    pub ref_radius: f64,
    /// Cross-sectional NFL area per track on the reference circle, in the
    /// thickness unit times mm.
    pub track_flux: Vec<f64>,
    pub trajectory: TrajectoryField,
}

/// Flux density `thickness × cos ψ` per unit arc length at the reference
/// circle.
fn flux_density(thickness: &dyn Fn(f64, f64) -> f64, traj: &TrajectoryField, r: f64, phi: f64) -> f64 {
    thickness(r, phi) * traj.deviation(r, phi).cos()
}

/// Places `n_tracks` seeds on the reference circle so that each track
/// carries the same flux. `thickness(r, φ)` is in the right-eye frame.
pub fn flux_tracks(
    thickness: &dyn Fn(f64, f64) -> f64,
    trajectory: &TrajectoryField,
    n_tracks: usize,
    annulus: [f64; 2],
) -> Result<TrackSkeleton, SuperpixelError> {
    if n_tracks < 2 {
        return Err(SuperpixelError::Grid("need at least two tracks".into()));
    }
    // Thickness must be positive over the annulus.
    let mut bad = 0usize;
    let mut total = 0usize;
    for k in 0..32 {
        let r = annulus[0] + (k as f64 + 0.5) * (annulus[1] - annulus[0]) / 32.0;
        for a in 0..256 {
            let phi = std::f64::consts::TAU * a as f64 / 256.0;
            total += 1;
            let t = thickness(r, phi);
            if !(t > 0.0 && t.is_finite()) {
                bad += 1;
            }
        }
    }
    if bad as f64 > 0.1 * total as f64 {
        return Err(SuperpixelError::Grid(format!(
            "thickness non-positive over {:.1}% of the annulus",
            100.0 * bad as f64 / total as f64
        )));
    }

    let r = FLUX_REFERENCE_RADIUS_MM;
    let n = FLUX_SAMPLES;
    let dphi = std::f64::consts::TAU / n as f64;
    let dens: Vec<f64> = (0..=n)
        .map(|a| flux_density(thickness, trajectory, r, a as f64 * dphi).max(0.0))
        .collect();
    // Cumulative flux, trapezoid rule on arc length.
    let mut cum = vec![0.0; n + 1];
    for a in 0..n {
        cum[a + 1] = cum[a] + 0.5 * (dens[a] + dens[a + 1]) * r * dphi;
    }
    let total_flux = cum[n];
    if !(total_flux > 0.0) {
        return Err(SuperpixelError::Grid("total flux is zero".into()));
    }
    // The cumulative curve is piecewise linear in its integrand, so invert
    // the exact trapezoid on each interval (a quadratic in the offset).
    let invert = |target: f64| -> f64 {
        let a = cum.partition_point(|&c| c < target).clamp(1, n) - 1;
        let (d0, d1) = (dens[a], dens[a + 1]);
        let need = (target - cum[a]) / (r * dphi);
        let slope = d1 - d0;
        let s = if slope.abs() < 1e-14 * d0.abs().max(1e-300) {
            if d0 > 0.0 { need / d0 } else { 0.0 }
        } else {
            let disc = (d0 * d0 + 2.0 * slope * need).max(0.0);
            (-d0 + disc.sqrt()) / slope
        };
        (a as f64 + s.clamp(0.0, 1.0)) * dphi
    };
    let seeds: Vec<f64> = (0..n_tracks)
        .map(|t| if t == 0 { 0.0 } else { invert(total_flux * t as f64 / n_tracks as f64) })
        .collect();
    let track_flux = vec![total_flux / n_tracks as f64; n_tracks];
    Ok(TrackSkeleton { seeds, ref_radius: r, track_flux, trajectory: trajectory.clone() })
}

impl TrackSkeleton {
    /// Azimuth (unwrapped, radians) of the streamline through seed `t` at
    /// radius `r`, integrating `dφ/dr = tan ψ / r` with classical RK4.
    pub fn boundary_at(&self, t: usize, r: f64) -> f64 {
        let traj = &self.trajectory;
        let f = |rr: f64, phi: f64| traj.deviation(rr, phi).tan() / rr;
        let span = r - self.ref_radius;
        let steps = ((span.abs() * STREAM_STEPS_PER_MM).ceil() as usize).max(1);
        let h = span / steps as f64;
        let mut phi = self.seeds[t];
        let mut rr = self.ref_radius;
        for _ in 0..steps {
            let k1 = f(rr, phi);
            let k2 = f(rr + 0.5 * h, phi + 0.5 * h * k1);
            let k3 = f(rr + 0.5 * h, phi + 0.5 * h * k2);
            let k4 = f(rr + h, phi + h * k3);
            phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            rr += h;
        }
        phi
    }

    pub fn n_tracks(&self) -> usize {
        self.seeds.len()
    }
}

/// Partition of the polar annulus into `n_tracks × n_segments` cells.
/// Cell index is `track · n_segments + segment`; segment 0 is innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelGrid {
    pub n_tracks: usize,
    pub n_segments: usize,
    pub annulus: [f64; 2],
    pub polar: PolarGeometry,
    /// Per track, the boundary azimuth (radians) on every ring inside the
    /// annulus; `None` for rings outside.
    pub boundaries: Vec<Vec<Option<f64>>>,
    /// Polar bin indices (`ring · A + azimuth`) per cell.
    pub cells: Vec<Vec<usize>>,
    pub track_flux: Vec<f64>,
}

pub fn build_grid(
    skeleton: &TrackSkeleton,
    polar: &PolarGeometry,
    annulus: [f64; 2],
    n_segments: usize,
) -> Result<SuperpixelGrid, SuperpixelError> {
    polar.validate().map_err(|e| SuperpixelError::Grid(e.to_string()))?;
    if n_segments == 0 || !(annulus[1] > annulus[0]) {
        return Err(SuperpixelError::Grid("invalid annulus or segment count".into()));
    }
    if annulus[0] < polar.r_min || annulus[1] > polar.r_max {
        return Err(SuperpixelError::Grid("annulus outside the polar raster".into()));
    }
    let nt = skeleton.n_tracks();
    let (na, nr) = (polar.azimuth_bins, polar.radius_bins);
    let seg_width = (annulus[1] - annulus[0]) / n_segments as f64;
    let mut cells = vec![Vec::new(); nt * n_segments];
    let mut boundaries = vec![vec![None; nr]; nt];
    const TIE: f64 = 1e-9;
    for k in 0..nr {
        let r = polar.radius(k);
        if r < annulus[0] || r >= annulus[1] {
            continue;
        }
        let seg = (((r - annulus[0]) / seg_width).floor() as usize).min(n_segments - 1);
        // Boundaries relative to track 0, unwrapped into [0, 2π).
        let b: Vec<f64> = (0..nt).map(|t| skeleton.boundary_at(t, r)).collect();
        let origin = b[0];
        let rel: Vec<f64> = b.iter().map(|&v| (v - origin).rem_euclid(std::f64::consts::TAU)).collect();
        for t in 0..nt {
            boundaries[t][k] = Some(b[t].rem_euclid(std::f64::consts::TAU));
        }
        for a in 0..na {
            let phi = (polar.azimuth(a) - origin).rem_euclid(std::f64::consts::TAU);
            let phi = if std::f64::consts::TAU - phi < TIE { 0.0 } else { phi };
            let t = rel.partition_point(|&v| v <= phi + TIE).max(1) - 1;
            cells[t * n_segments + seg].push(k * na + a);
        }
    }
    Ok(SuperpixelGrid {
        n_tracks: nt,
        n_segments,
        annulus,
        polar: *polar,
        boundaries,
        cells,
        track_flux: skeleton.track_flux.clone(),
    })
}

impl SuperpixelGrid {
    pub fn n_cells(&self) -> usize {
        self.n_tracks * self.n_segments
    }

    pub fn cell_index(&self, track: usize, segment: usize) -> usize {
        track * self.n_segments + segment
    }

    /// Cell owning each polar bin (`None` outside the annulus).
    pub fn cell_of_bin(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.polar.azimuth_bins * self.polar.radius_bins];
        for (c, bins) in self.cells.iter().enumerate() {
            for &b in bins {
                out[b] = Some(c);
            }
        }
        out
    }

    /// Mean of the valid bins of every cell.
    pub fn aggregate<T: Scalar>(&self, pm: &PolarMap<T>) -> Result<Vec<T>, SuperpixelError> {
        if pm.geometry != self.polar {
            return Err(SuperpixelError::Grid("polar map sampled differently from the grid".into()));
        }
        let values = pm.values.as_slice();
        let valid = pm.valid.as_slice();
        self.cells
            .iter()
            .enumerate()
            .map(|(c, bins)| {
                let mut sum = 0.0f64;
                let mut n = 0usize;
                for &b in bins {
                    if valid[b] {
                        sum += values[b].as_f64();
                        n += 1;
                    }
                }
                if n == 0 {
                    Err(SuperpixelError::EmptyCell(c))
                } else {
                    Ok(T::lit(sum / n as f64))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixel::ArcuateModel;
    use crate::volume::phantom::ThicknessModel;

    fn annulus() -> [f64; 2] {
        [1.1, 2.0]
    }

    #[test]
    fn uniform_radial_case_gives_equal_sectors() {
        let sk = flux_tracks(&|_, _| 1.0, &TrajectoryField::radial(), 32, annulus()).unwrap();
        for (t, s) in sk.seeds.iter().enumerate() {
            assert!((s.to_degrees() - 11.25 * t as f64).abs() < 1e-9);
        }
        let g = build_grid(&sk, &PolarGeometry::default(), annulus(), 5).unwrap();
        assert_eq!(g.n_cells(), 160);
        let first = g.cells[0].len();
        assert!(g.cells.iter().all(|c| c.len() == first));
        // 8 azimuth bins per sector.
        let rings_in_annulus = (0..64).filter(|&k| {
            let r = g.polar.radius(k);
            (1.1..2.0).contains(&r)
        });
        assert_eq!(g.cells.iter().map(Vec::len).sum::<usize>(), rings_in_annulus.count() * 256);
        // Segment radii.
        let edges: Vec<f64> = (0..=5).map(|s| 1.1 + 0.18 * s as f64).collect();
        for (want, got) in [1.1, 1.28, 1.46, 1.64, 1.82, 2.0].iter().zip(&edges) {
            assert!((want - got).abs() < 1e-12);
        }
    }

    #[test]
    fn thick_superior_arcuate_gives_narrow_tracks() {
        let thick = |_r: f64, phi: f64| {
            let d = phi.to_degrees();
            if (40.0..100.0).contains(&d) { 2.0 } else { 1.0 }
        };
        let sk = flux_tracks(&thick, &TrajectoryField::radial(), 32, annulus()).unwrap();
        let width = |t: usize| {
            let next = if t + 1 < 32 { sk.seeds[t + 1] } else { std::f64::consts::TAU };
            next - sk.seeds[t]
        };
        let superior = (0..32).find(|&t| (50.0..80.0).contains(&sk.seeds[t].to_degrees())).unwrap();
        let nasal = (0..32).find(|&t| (170.0..200.0).contains(&sk.seeds[t].to_degrees())).unwrap();
        assert!(width(superior) < 0.6 * width(nasal));
    }

    /// Independent flux oracle: Simpson integration of the flux density
    /// between consecutive seeds.
    fn simpson_track_flux(sk: &TrackSkeleton, thick: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
        let r = sk.ref_radius;
        (0..sk.n_tracks())
            .map(|t| {
                let a = sk.seeds[t];
                let b = if t + 1 < sk.n_tracks() { sk.seeds[t + 1] } else { std::f64::consts::TAU };
                let m = 2000;
                let h = (b - a) / m as f64;
                let f = |p: f64| thick(r, p) * sk.trajectory.deviation(r, p).cos() * r;
                let mut s = f(a) + f(b);
                for i in 1..m {
                    s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
                }
                s * h / 3.0
            })
            .collect()
    }

    #[test]
    fn track_flux_is_balanced() {
        let model = ThicknessModel::default();
        let thick = move |r: f64, phi: f64| model.thickness_mm(r, phi);
        for traj in [TrajectoryField::default_trajectory(), TrajectoryField::Model(ArcuateModel { sweep: 0.9, ref_radius: 1.55 })] {
            let sk = flux_tracks(&thick, &traj, 32, annulus()).unwrap();
            let flux = simpson_track_flux(&sk, &thick);
            let total: f64 = flux.iter().sum();
            for f in &flux {
                assert!((f / (total / 32.0) - 1.0).abs() < 0.02);
            }
        }
    }

    #[test]
    fn cells_partition_the_annulus() {
        let model = ThicknessModel::default();
        let thick = move |r: f64, phi: f64| model.thickness_mm(r, phi);
        let sk = flux_tracks(&thick, &TrajectoryField::default_trajectory(), 32, annulus()).unwrap();
        let g = build_grid(&sk, &PolarGeometry::default(), annulus(), 5).unwrap();
        let mut seen = vec![0u8; 256 * 64];
        for c in &g.cells {
            assert!(!c.is_empty());
            for &b in c {
                seen[b] += 1;
            }
        }
        for k in 0..64 {
            let inside = (1.1..2.0).contains(&g.polar.radius(k));
            for a in 0..256 {
                assert_eq!(seen[k * 256 + a], inside as u8);
            }
        }
        // Streamlines never cross: boundaries stay ordered on every ring.
        for k in 0..64 {
            if let Some(b0) = g.boundaries[0][k] {
                let rel: Vec<f64> = (0..32)
                    .map(|t| (g.boundaries[t][k].unwrap() - b0).rem_euclid(std::f64::consts::TAU))
                    .collect();
                assert!(rel.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn aggregate_constant_and_linear() {
        let sk = flux_tracks(&|_, _| 1.0, &TrajectoryField::default_trajectory(), 32, annulus()).unwrap();
        let g = build_grid(&sk, &PolarGeometry::default(), annulus(), 5).unwrap();
        let c = PolarMap::<f32>::from_fn(g.polar, |_, _| -1.5);
        assert!(g.aggregate(&c).unwrap().iter().all(|&v| (v + 1.5).abs() < 1e-6));

        let x = PolarMap::<f64>::from_fn(g.polar, |r, p| r * p.sin());
        let y = PolarMap::<f64>::from_fn(g.polar, |r, p| (3.0 * p).cos() - r);
        let xy = PolarMap::<f64>::from_fn(g.polar, |r, p| r * p.sin() + (3.0 * p).cos() - r);
        let (ax, ay, axy) = (g.aggregate(&x).unwrap(), g.aggregate(&y).unwrap(), g.aggregate(&xy).unwrap());
        for i in 0..160 {
            assert!((ax[i] + ay[i] - axy[i]).abs() < 1e-12);
        }

        let mut empty = c.clone();
        for &b in &g.cells[17] {
            empty.valid.as_mut_slice()[b] = false;
        }
        assert!(matches!(g.aggregate(&empty), Err(SuperpixelError::EmptyCell(17))));
    }

    #[test]
    fn wedge_of_three_tracks() {
        let sk = flux_tracks(&|_, _| 1.0, &TrajectoryField::radial(), 32, annulus()).unwrap();
        let g = build_grid(&sk, &PolarGeometry::default(), annulus(), 5).unwrap();
        // Tracks 4, 5, 6 span 45°..78.75°.
        let pm = PolarMap::<f64>::from_fn(g.polar, |_, p| {
            let d = p.to_degrees();
            if (45.0 - 1e-9..78.75 - 1e-9).contains(&d) { -6.0 } else { 0.0 }
        });
        let v = g.aggregate(&pm).unwrap();
        for t in 0..32 {
            for s in 0..5 {
                let want = if (4..7).contains(&t) { -6.0 } else { 0.0 };
                assert_eq!(v[g.cell_index(t, s)], want);
            }
        }
    }
}
