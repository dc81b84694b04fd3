use std::collections::VecDeque;

use super::SegmentationError;
use crate::grid::Grid2;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InpaintOptions {
    /// Stop when the largest update in a sweep falls below
    /// `tolerance × max |known value|` (or `tolerance` for an all-zero map).
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Over-relaxation factor in `[1, 2)`; 1 is plain Gauss-Seidel.
    pub relaxation: f64,
}

impl Default for InpaintOptions {
    fn default() -> Self {
        // 1e-7 relative on a linear ratio is about 4e-7 dB.
        Self { tolerance: 1e-7, max_sweeps: 200_000, relaxation: 1.6 }
    }
}

/// Replaces masked pixels by the discrete harmonic interpolant of the
/// surrounding unmasked values. Non-finite unmasked pixels are treated as
/// outside the domain: they are neither used nor modified.
pub fn inpaint_vessels<T: Scalar>(
    map: &Grid2<T>,
    mask: &Grid2<bool>,
) -> Result<Grid2<T>, SegmentationError> {
    inpaint_with(map, mask, &InpaintOptions::default())
}

/// The part of `mask` connected through masked pixels to at least one
/// finite unmasked pixel, the region [`inpaint_with`] can fill.
pub fn reachable_holes<T: Scalar>(map: &Grid2<T>, mask: &Grid2<bool>) -> Grid2<bool> {
    let (nx, ny) = (map.nx(), map.ny());
    let m = mask.as_slice();
    let src = map.as_slice();
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    for k in 0..nx * ny {
        if !m[k] && src[k].is_finite() {
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (x, y) = (k % nx, k / nx);
        let cand = [
            (x > 0).then(|| k - 1),
            (x + 1 < nx).then(|| k + 1),
            (y > 0).then(|| k - nx),
            (y + 1 < ny).then(|| k + nx),
        ];
        for n in cand.into_iter().flatten() {
            if m[n] && !seen[n] {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    Grid2::from_vec(nx, ny, seen).expect("shape")
}

pub fn inpaint_with<T: Scalar>(
    map: &Grid2<T>,
    mask: &Grid2<bool>,
    opts: &InpaintOptions,
) -> Result<Grid2<T>, SegmentationError> {
    if !map.same_shape(mask) {
        return Err(SegmentationError::Shape("inpainting mask differs from map".into()));
    }
    let (nx, ny) = (map.nx(), map.ny());
    let m = mask.as_slice();
    let src = map.as_slice();
    let known = |k: usize| !m[k] && src[k].is_finite();
    let holes: Vec<usize> = (0..nx * ny).filter(|&k| m[k]).collect();
    let mut out = map.clone();
    if holes.is_empty() {
        return Ok(out);
    }

    let neighbours = |k: usize| {
        let (x, y) = (k % nx, k / nx);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = k - 1;
        }
        if x + 1 < nx {
            n[1] = k + 1;
        }
        if y > 0 {
            n[2] = k - nx;
        }
        if y + 1 < ny {
            n[3] = k + nx;
        }
        n
    };

    // Breadth-first sweep from the known pixels: reachability check and a
    // distance-ordered initial guess (mean of already filled neighbours).
    let mut queued = vec![false; nx * ny];
    let mut filled = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    for &h in &holes {
        if neighbours(h).iter().any(|&n| n != usize::MAX && known(n)) {
            queued[h] = true;
            queue.push_back(h);
        }
    }
    let data = out.as_mut_slice();
    while let Some(h) = queue.pop_front() {
        let mut sum = T::zero();
        let mut cnt = 0;
        for n in neighbours(h) {
            if n == usize::MAX {
                continue;
            }
            if known(n) || filled[n] {
                sum += data[n];
                cnt += 1;
            } else if m[n] && !queued[n] {
                queued[n] = true;
                queue.push_back(n);
            }
        }
        data[h] = sum / T::lit(cnt as f64);
        filled[h] = true;
    }
    let unreachable = holes.iter().filter(|&&h| !filled[h]).count();
    if unreachable > 0 {
        return Err(SegmentationError::InpaintImpossible(unreachable));
    }

    let scale = src
        .iter()
        .enumerate()
        .filter(|(k, _)| known(*k))
        .map(|(_, v)| v.abs())
        .fold(T::zero(), |a, b| a.max(b));
    // A relative tolerance below the type's resolution can never be met.
    let rel = T::lit(opts.tolerance).max(T::lit(8.0) * T::epsilon());
    let tol = rel * if scale > T::zero() { scale } else { T::one() };
    let omega = T::lit(opts.relaxation);
    let hood: Vec<[usize; 4]> = holes.iter().map(|&h| neighbours(h)).collect();
    for _ in 0..opts.max_sweeps {
        let mut max_update = T::zero();
        for (&h, nb) in holes.iter().zip(&hood) {
            let mut sum = T::zero();
            let mut cnt = 0;
            for &n in nb {
                if n != usize::MAX && (m[n] || known(n)) {
                    sum += data[n];
                    cnt += 1;
                }
            }
            let target = sum / T::lit(cnt as f64);
            let delta = omega * (target - data[h]);
            data[h] += delta;
            max_update = max_update.max(delta.abs());
        }
        if max_update < tol {
            return Ok(out);
        }
    }
    Err(SegmentationError::NotConverged(opts.max_sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_mask_is_identity() {
        let g = Grid2::from_fn(5, 4, |x, y| (x * y) as f64);
        let m = Grid2::filled(5, 4, false);
        assert_eq!(inpaint_vessels(&g, &m).unwrap(), g);
    }

    #[test]
    fn one_pixel_strip() {
        let g = Grid2::from_vec(3, 1, vec![1.0, f64::NAN, 3.0]).unwrap();
        let m = Grid2::from_vec(3, 1, vec![false, true, false]).unwrap();
        let out = inpaint_vessels(&g, &m).unwrap();
        assert!((out.get(1, 0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_map_stays_constant_f32() {
        let g = Grid2::filled(9, 7, 2.5f32);
        let m = Grid2::from_fn(9, 7, |x, y| (2..6).contains(&x) && (1..5).contains(&y));
        let out = inpaint_vessels(&g, &m).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 2.5).abs() < 1e-5));
    }

    #[test]
    fn linear_ramp_is_reproduced() {
        // Harmonic functions are fixed points of the discrete Laplacian.
        let g = Grid2::from_fn(12, 10, |x, y| 0.5 * x as f64 - 0.25 * y as f64);
        let m = Grid2::from_fn(12, 10, |x, y| (3..9).contains(&x) && (2..8).contains(&y));
        let out = inpaint_vessels(&g, &m).unwrap();
        for (a, b) in out.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn full_mask_is_impossible() {
        let g = Grid2::filled(4, 4, 1.0f64);
        let m = Grid2::filled(4, 4, true);
        assert!(matches!(inpaint_vessels(&g, &m), Err(SegmentationError::InpaintImpossible(16))));
    }

    #[test]
    fn island_behind_invalid_region_is_impossible() {
        let mut g = Grid2::filled(5, 5, 1.0f64);
        g.set(2, 0, f64::NAN);
        let m = Grid2::from_fn(5, 5, |x, y| x == 2 && y > 0);
        assert_eq!(reachable_holes(&g, &m).count_true(), 4);
        let fenced = Grid2::from_fn(5, 5, |x, _| x < 2);
        let nan = Grid2::from_fn(5, 5, |x, _| if x == 2 { f64::NAN } else { 1.0 });
        assert_eq!(reachable_holes(&nan, &fenced).count_true(), 0);
        // Pixel 0 is masked and only touches NaN (out-of-domain) pixels.
        let g = Grid2::from_vec(3, 1, vec![0.0, f64::NAN, 1.0]).unwrap();
        let m = Grid2::from_vec(3, 1, vec![true, false, false]).unwrap();
        assert!(matches!(inpaint_vessels(&g, &m), Err(SegmentationError::InpaintImpossible(1))));
    }

    proptest! {
        #[test]
        fn maximum_principle(
            vals in proptest::collection::vec(-5.0f64..5.0, 64),
            holes in proptest::collection::vec(any::<bool>(), 64),
        ) {
            let g = Grid2::from_vec(8, 8, vals).unwrap();
            let mut hm = holes;
            hm[0] = false;
            let m = Grid2::from_vec(8, 8, hm).unwrap();
            let out = inpaint_vessels(&g, &m).unwrap();
            let known: Vec<f64> = (0..64).filter(|&k| !m.as_slice()[k]).map(|k| g.as_slice()[k]).collect();
            let lo = known.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = known.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for k in 0..64 {
                let v = out.as_slice()[k];
                prop_assert!(v.is_finite());
                if m.as_slice()[k] {
                    prop_assert!(v >= lo - 1e-5 && v <= hi + 1e-5);
                } else {
                    prop_assert_eq!(v, g.as_slice()[k]);
                }
            }
        }
    }
}
