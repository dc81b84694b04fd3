use rayon::prelude::*;

use super::SurfaceSet;
use crate::grid::Grid2;
use crate::reflectance::ppec_mean_map;
use crate::volume::ScanVolume;

/// Upper bound on the fraction of en-face positions marked as vessel.
pub const MAX_VESSEL_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VesselOptions {
    /// Positions whose PPEC mean falls below this fraction of the local
    /// median are flagged.
    pub shadow_ratio: f64,
    /// Half-width of the local median window, mm.
    pub window_mm: f64,
}

impl Default for VesselOptions {
    fn default() -> Self {
        Self { shadow_ratio: 0.6, window_mm: 0.3 }
    }
}

/// Flags positions shadowed by large inner-retinal vessels: PPEC-band
/// intensity well below the median of its neighbourhood. Disc positions are
/// never flagged. If more than [`MAX_VESSEL_FRACTION`] of positions qualify,
/// only the most strongly shadowed ones are kept.
pub fn detect_vessels(volume: &ScanVolume, surfaces: &SurfaceSet, opts: &VesselOptions) -> Grid2<bool> {
    let g = surfaces.geometry;
    let ppec = ppec_mean_map(volume, surfaces);
    let disc = surfaces.disc_mask();
    let usable = Grid2::from_fn(g.nx, g.ny, |i, j| *ppec.valid.get(i, j) && !*disc.get(i, j));

    let rx = (opts.window_mm / g.dx()).round().max(1.0) as usize;
    let ry = (opts.window_mm / g.dy()).round().max(1.0) as usize;
    // Sub-sample large windows to about 15 x 15 taps.
    let sx = (2 * rx + 1).div_ceil(15).max(1);
    let sy = (2 * ry + 1).div_ceil(15).max(1);

    let ratios: Vec<f64> = (0..g.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            let ppec = &ppec;
            let usable = &usable;
            let mut buf = Vec::new();
            (0..g.nx).map(move |i| {
                if !*usable.get(i, j) {
                    return f64::INFINITY;
                }
                buf.clear();
                let mut yy = j.saturating_sub(ry);
                while yy < (j + ry + 1).min(g.ny) {
                    let mut xx = i.saturating_sub(rx);
                    while xx < (i + rx + 1).min(g.nx) {
                        if *usable.get(xx, yy) {
                            buf.push(*ppec.values.get(xx, yy));
                        }
                        xx += sx;
                    }
                    yy += sy;
                }
                let mid = buf.len() / 2;
                let (_, med, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                if *med > 0.0 {
                    *ppec.values.get(i, j) / *med
                } else {
                    f64::INFINITY
                }
            })
        })
        .collect();

    let mut flagged: Vec<usize> = (0..ratios.len()).filter(|&k| ratios[k] < opts.shadow_ratio).collect();
    let cap = (MAX_VESSEL_FRACTION * ratios.len() as f64).floor() as usize;
    if flagged.len() > cap {
        flagged.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(a.cmp(&b)));
        flagged.truncate(cap);
    }
    let mut mask = Grid2::filled(g.nx, g.ny, false);
    for k in flagged {
        mask.as_mut_slice()[k] = true;
    }
    mask
}
