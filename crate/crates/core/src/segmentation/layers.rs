//! Axial-gradient surface extraction.
//!
//! Each A-line is searched for four boundaries using a log-ratio step
//! detector `ln mean(p[j..j+w]) - ln mean(p[j-w..j])`, which peaks exactly at
//! the first sample of a brighter layer (rise) or a darker one (fall):
//!
//! * inner surface: first sustained excursion above the vitreous level,
//!   refined to the strongest nearby rise;
//! * ellipsoid zone: strongest rise below the inner surface;
//! * Bruch's membrane: strongest fall shortly below the ellipsoid zone;
//! * NFL posterior boundary: strongest fall between the inner surface and
//!   the ellipsoid zone.
//!
//! Columns without an ellipsoid-zone rise form the disc. Boundary maps are
//! then median filtered transversally. A boundary at sample index `j` is
//! reported at depth `j · dz`, the anterior edge of that sample.

use rayon::prelude::*;

use super::{inpaint_vessels, point_in_polygon, Layer, SegmentationError, SurfaceSet};
use crate::grid::Grid2;
use crate::volume::ScanVolume;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegmentationOptions {
    /// Half-width of the step detector, mm (rounded to samples, clamped to
    /// 2..=6 samples).
    pub step_window_mm: f64,
    /// Inner surface threshold as a multiple of the vitreous level.
    pub surface_threshold: f64,
    /// Minimum ellipsoid-zone rise, as an intensity ratio.
    pub min_ez_ratio: f64,
    /// Minimum Bruch's membrane fall, as an intensity ratio.
    pub min_bruchs_ratio: f64,
    /// Search depth below the ellipsoid zone for Bruch's membrane, mm.
    pub ppec_search_mm: f64,
    /// Fraction of non-disc positions allowed to fail per layer.
    pub max_failure_fraction: f64,
    /// Transverse median half-width, pixels.
    pub median_radius: usize,
}

impl Default for SegmentationOptions {
    fn default() -> Self {
        Self {
            step_window_mm: 0.015,
            surface_threshold: 2.5,
            min_ez_ratio: 3.0,
            min_bruchs_ratio: 2.0,
            ppec_search_mm: 0.2,
            max_failure_fraction: 0.10,
            median_radius: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ColumnResult {
    top: Option<usize>,
    ez: Option<usize>,
    bottom: Option<usize>,
    bruchs: Option<usize>,
}

struct Profile {
    cum: Vec<f64>,
}

impl Profile {
    fn new(line: &[f32]) -> Self {
        let mut cum = Vec::with_capacity(line.len() + 1);
        let mut acc = 0.0f64;
        cum.push(0.0);
        for &v in line {
            acc += v as f64;
            cum.push(acc);
        }
        Self { cum }
    }

    fn len(&self) -> usize {
        self.cum.len() - 1
    }

    fn mean(&self, a: usize, b: usize) -> f64 {
        (self.cum[b] - self.cum[a]) / (b - a) as f64
    }

    /// Log-ratio of the mean after `j` to the mean before it.
    fn step(&self, j: usize, w: usize) -> f64 {
        let n = self.len();
        let a = j.saturating_sub(w);
        let b = (j + w).min(n);
        if a >= j || j >= b {
            return 0.0;
        }
        const EPS: f64 = 1e-12;
        ((self.mean(j, b) + EPS) / (self.mean(a, j) + EPS)).ln()
    }

    fn argmax_step(&self, lo: usize, hi: usize, w: usize, sign: f64) -> Option<(usize, f64)> {
        (lo.max(1)..hi.min(self.len()))
            .map(|j| (j, sign * self.step(j, w)))
            .fold(None, |best, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
    }
}

fn segment_column(line: &[f32], threshold: f64, w: usize, opts: &SegmentationOptions, dz: f64) -> ColumnResult {
    let p = Profile::new(line);
    let n = p.len();
    let mut out = ColumnResult::default();
    let Some(k) = (0..n.saturating_sub(w)).find(|&k| line[k] as f64 > threshold && p.mean(k, k + w) > threshold)
    else {
        return out;
    };
    let Some((top, _)) = p.argmax_step(k.saturating_sub(w), k + w + 1, w, 1.0) else {
        return out;
    };
    out.top = Some(top);

    let Some((ez, rise)) = p.argmax_step(top + w + 1, n, w, 1.0) else {
        return out;
    };
    if rise < opts.min_ez_ratio.ln() {
        return out;
    }
    out.ez = Some(ez);

    let reach = ((opts.ppec_search_mm / dz).ceil() as usize).max(2 * w);
    if let Some((bm, fall)) = p.argmax_step(ez + 2, ez + reach, w, -1.0) {
        if fall >= opts.min_bruchs_ratio.ln() {
            out.bruchs = Some(bm);
        }
    }
    out.bottom = p.argmax_step(top + 1, ez, w, -1.0).map(|(j, _)| j).or(Some(top));
    out
}

/// Vitreous level estimate: the 10th percentile of the volume's samples.
fn background_level(volume: &ScanVolume) -> f64 {
    let s = volume.samples();
    let stride = (s.len() / 200_000).max(1);
    let mut v: Vec<f32> = s.iter().step_by(stride).copied().collect();
    let k = v.len() / 10;
    let (_, kth, _) = v.select_nth_unstable_by(k, f32::total_cmp);
    *kth as f64
}

pub fn segment_surfaces(
    volume: &ScanVolume,
    opts: &SegmentationOptions,
) -> Result<SurfaceSet, SegmentationError> {
    let g = volume.en_face();
    let dz = volume.depth_spacing_mm();
    let n = volume.dims().depth;
    let w = ((opts.step_window_mm / dz).round() as usize).clamp(2, 6);
    let bg = background_level(volume);
    let threshold = (opts.surface_threshold * bg).max(1e-6);

    let cols: Vec<ColumnResult> = (0..g.nx * g.ny)
        .into_par_iter()
        .map(|k| segment_column(volume.a_line(k % g.nx, k / g.nx), threshold, w, opts, dz))
        .collect();

    let total = cols.len() as f64;
    let no_top = cols.iter().filter(|c| c.top.is_none()).count();
    if no_top as f64 > opts.max_failure_fraction * total {
        return Err(SegmentationError::Failure {
            layer: Layer::InnerSurface,
            percent: 100.0 * no_top as f64 / total,
        });
    }

    // The disc is the connected set of columns lacking the outer-retinal
    // rise that contains (or lies nearest to) the scan centre.
    let no_ez = Grid2::from_vec(g.nx, g.ny, cols.iter().map(|c| c.top.is_some() && c.ez.is_none()).collect())
        .expect("shape");
    let disc_pixels = central_component(&no_ez).ok_or(SegmentationError::Failure {
        layer: Layer::Disc,
        percent: 100.0,
    })?;
    let disc_polygon = star_polygon(&disc_pixels, &g);
    let in_disc = Grid2::from_fn(g.nx, g.ny, |i, j| {
        *disc_pixels.get(i, j) || point_in_polygon(g.pixel_center(i, j), &disc_polygon)
    });

    let outside = total - in_disc.count_true() as f64;
    let check = |layer: Layer, f: &dyn Fn(&ColumnResult) -> bool| {
        let failed = cols
            .iter()
            .zip(in_disc.as_slice())
            .filter(|(c, &d)| !d && !f(c))
            .count();
        if failed as f64 > opts.max_failure_fraction * outside.max(1.0) {
            Err(SegmentationError::Failure { layer, percent: 100.0 * failed as f64 / outside.max(1.0) })
        } else {
            Ok(())
        }
    };
    check(Layer::InnerSurface, &|c| c.top.is_some())?;
    check(Layer::Ellipsoid, &|c| c.ez.is_some())?;
    check(Layer::Bruchs, &|c| c.bruchs.is_some())?;

    let to_map = |f: &dyn Fn(&ColumnResult) -> Option<usize>, disc_value: &dyn Fn(&ColumnResult) -> Option<usize>| {
        let values: Vec<f64> = cols
            .iter()
            .zip(in_disc.as_slice())
            .map(|(c, &d)| {
                let v = if d { disc_value(c) } else { f(c) };
                v.map_or(f64::NAN, |j| j as f64 * dz)
            })
            .collect();
        Grid2::from_vec(g.nx, g.ny, values).expect("shape")
    };
    let top_of = |c: &ColumnResult| c.top;
    let mut maps = [
        to_map(&|c| c.top, &top_of),
        to_map(&|c| c.bottom, &top_of),
        to_map(&|c| c.ez, &top_of),
        to_map(&|c| c.bruchs, &top_of),
    ];
    for m in &mut maps {
        *m = fill_missing(m)?;
        *m = median_filter(m, &in_disc, opts.median_radius);
    }

    let depth_max = n as f64 * dz;
    let [mut top, mut bottom, mut ez, mut bm] = maps;
    for k in 0..g.nx * g.ny {
        let t = top.as_slice()[k].clamp(0.0, depth_max);
        let (b, e, m) = if in_disc.as_slice()[k] {
            (t, t, t)
        } else {
            let e = ez.as_slice()[k].clamp(t, depth_max);
            let b = bottom.as_slice()[k].clamp(t, e);
            let m = bm.as_slice()[k].clamp(e, depth_max);
            (b, e, m)
        };
        top.as_mut_slice()[k] = t;
        bottom.as_mut_slice()[k] = b;
        ez.as_mut_slice()[k] = e;
        bm.as_mut_slice()[k] = m;
    }

    let surfaces = SurfaceSet {
        geometry: g,
        nfl_top: top,
        nfl_bottom: bottom,
        ez_anterior: ez,
        bruchs: bm,
        disc_polygon,
        vessel_mask: Grid2::filled(g.nx, g.ny, false),
    };
    surfaces.validate(depth_max)?;
    Ok(surfaces)
}

/// Fills NaN entries harmonically from their finite neighbours.
fn fill_missing(map: &Grid2<f64>) -> Result<Grid2<f64>, SegmentationError> {
    let holes = map.map(|v| !v.is_finite());
    if holes.count_true() == 0 {
        return Ok(map.clone());
    }
    inpaint_vessels(map, &holes)
}

fn median_filter(map: &Grid2<f64>, exclude: &Grid2<bool>, radius: usize) -> Grid2<f64> {
    if radius == 0 {
        return map.clone();
    }
    let (nx, ny) = (map.nx(), map.ny());
    let rows: Vec<Vec<f64>> = (0..ny)
        .into_par_iter()
        .map(|y| {
            let mut buf = Vec::with_capacity((2 * radius + 1).pow(2));
            (0..nx)
                .map(|x| {
                    if *exclude.get(x, y) {
                        return *map.get(x, y);
                    }
                    buf.clear();
                    for yy in y.saturating_sub(radius)..(y + radius + 1).min(ny) {
                        for xx in x.saturating_sub(radius)..(x + radius + 1).min(nx) {
                            if !*exclude.get(xx, yy) {
                                buf.push(*map.get(xx, yy));
                            }
                        }
                    }
                    let mid = buf.len() / 2;
                    let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                    *m
                })
                .collect()
        })
        .collect();
    Grid2::from_vec(nx, ny, rows.concat()).expect("shape")
}

/// 4-connected component of `mask` containing the grid centre, or the
/// component whose nearest pixel is closest to it.
fn central_component(mask: &Grid2<bool>) -> Option<Grid2<bool>> {
    let (nx, ny) = (mask.nx(), mask.ny());
    let mut label = vec![usize::MAX; nx * ny];
    let mut best: Option<(f64, usize)> = None;
    let (cx, cy) = (0.5 * nx as f64, 0.5 * ny as f64);
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if !mask.as_slice()[start] || label[start] != usize::MAX {
            continue;
        }
        let mut nearest = f64::INFINITY;
        let mut size = 0;
        label[start] = next;
        stack.push(start);
        while let Some(k) = stack.pop() {
            size += 1;
            let (x, y) = (k % nx, k / nx);
            nearest = nearest.min((x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy));
            let mut visit = |n: usize| {
                if mask.as_slice()[n] && label[n] == usize::MAX {
                    label[n] = next;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(k - 1);
            }
            if x + 1 < nx {
                visit(k + 1);
            }
            if y > 0 {
                visit(k - nx);
            }
            if y + 1 < ny {
                visit(k + nx);
            }
        }
        // Tiny specks are noise, not a disc.
        if size >= 4 && best.is_none_or(|(d, _)| nearest < d) {
            best = Some((nearest, next));
        }
        next += 1;
    }
    let (_, id) = best?;
    Some(Grid2::from_vec(nx, ny, label.iter().map(|&l| l == id).collect()).expect("shape"))
}

/// Star-shaped outline of a pixel set around its centroid, as seen along
/// 72 rays, with a circular 5-tap median on the radii.
fn star_polygon(pixels: &Grid2<bool>, g: &crate::geometry::EnFaceGeometry) -> Vec<[f64; 2]> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut cnt = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if *pixels.get(i, j) {
                let c = g.pixel_center(i, j);
                sx += c[0];
                sy += c[1];
                cnt += 1.0;
            }
        }
    }
    let c = [sx / cnt, sy / cnt];
    let step = 0.25 * g.dx().min(g.dy());
    let inside = |p: [f64; 2]| {
        let f = g.to_index(p);
        let (i, j) = (f[0].round(), f[1].round());
        i >= 0.0 && j >= 0.0 && (i as usize) < g.nx && (j as usize) < g.ny && *pixels.get(i as usize, j as usize)
    };
    const RAYS: usize = 72;
    let radii: Vec<f64> = (0..RAYS)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / RAYS as f64;
            let (dx, dy) = (a.cos(), a.sin());
            let mut r = 0.0;
            let mut last_inside = 0.0;
            let limit = g.extent_mm[0].max(g.extent_mm[1]);
            while r < limit {
                if inside([c[0] + r * dx, c[1] + r * dy]) {
                    last_inside = r;
                } else if r - last_inside > 3.0 * g.dx().max(g.dy()) {
                    break;
                }
                r += step;
            }
            last_inside + 0.5 * g.dx().min(g.dy())
        })
        .collect();
    (0..RAYS)
        .map(|k| {
            let mut win: Vec<f64> = (0..5).map(|d| radii[(k + RAYS + d - 2) % RAYS]).collect();
            win.sort_by(f64::total_cmp);
            let a = std::f64::consts::TAU * k as f64 / RAYS as f64;
            [c[0] + win[2] * a.cos(), c[1] + win[2] * a.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::phantom::{generate_phantom, PhantomSpec};
    use crate::volume::VolumeDims;

    fn rms_samples(a: &Grid2<f64>, b: &Grid2<f64>, mask: &Grid2<bool>, dz: f64) -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for k in 0..a.len() {
            if mask.as_slice()[k] {
                s += ((a.as_slice()[k] - b.as_slice()[k]) / dz).powi(2);
                n += 1.0;
            }
        }
        (s / n).sqrt()
    }

    #[test]
    fn clean_phantom_surfaces_match_truth() {
        let mut spec = PhantomSpec::flat(VolumeDims::new(320, 64, 64));
        spec.beam_offset = [1.0, 0.5];
        spec.retinal_curvature = 0.05;
        let p = generate_phantom(&spec).unwrap();
        let s = segment_surfaces(&p.volume, &SegmentationOptions::default()).unwrap();
        let dz = p.volume.depth_spacing_mm();
        let keep = s.disc_mask().map(|d| !d);
        let keep = Grid2::from_fn(64, 64, |i, j| {
            *keep.get(i, j) && !*p.surfaces.disc_mask().get(i, j)
        });
        for (a, b) in [
            (&s.nfl_top, &p.surfaces.nfl_top),
            (&s.nfl_bottom, &p.surfaces.nfl_bottom),
            (&s.ez_anterior, &p.surfaces.ez_anterior),
            (&s.bruchs, &p.surfaces.bruchs),
        ] {
            assert!(rms_samples(a, b, &keep, dz) <= 0.5);
        }
        let c = s.disc_center();
        assert!((c[0] - 2.25).hypot(c[1] - 2.25) < 0.1);
    }

    #[test]
    fn all_zero_volume_fails() {
        let spec = PhantomSpec::flat(VolumeDims::new(16, 8, 8));
        let mut p = generate_phantom(&spec).unwrap();
        p.volume = p.volume.shifted_axially(100, 0.0);
        assert!(matches!(
            segment_surfaces(&p.volume, &SegmentationOptions::default()),
            Err(SegmentationError::Failure { layer: Layer::InnerSurface, .. })
        ));
    }
}
