//! Azimuthal notch and smoothing filter on polar maps.
//!
//! The map is decomposed per ring into azimuthal Fourier orders `m`. Order
//! ±1 is removed, orders above `k_az` are attenuated, and orders
//! `notch_order < |m| <= k_az` outside the exempt band are additionally
//! low-passed along the radius (mirror-padded DFT, cut-off `k_rad` cycles per
//! radial range). Orders `|m| <= radial_exempt_order` keep their full radial
//! profile, so orders 0 and 2 pass unchanged on every ring. With a one-bin
//! roll-off all gains are exactly 0 or 1 and the filter is an orthogonal
//! projection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::PolarMap;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Azimuthal order removed (with its negative).
    pub notch_order: usize,
    /// Highest azimuthal order passed at full gain.
    pub k_az: usize,
    /// Radial cut-off, cycles per `(r_max - r_min)`; `None` disables radial
    /// smoothing.
    pub k_rad: Option<f64>,
    /// Width of the raised-cosine roll-off, bins.
    pub rolloff_bins: f64,
    /// Azimuthal orders up to this one are not radially smoothed.
    pub radial_exempt_order: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { notch_order: 1, k_az: 32, k_rad: Some(8.0), rolloff_bins: 1.0, radial_exempt_order: 2 }
    }
}

/// Gain 1 up to `cut`, raised-cosine fall to 0 over `width` bins.
fn rolloff(f: f64, cut: f64, width: f64) -> f64 {
    if f <= cut {
        1.0
    } else if f >= cut + width {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (f - cut) / width).cos())
    }
}

/// Fills invalid bins: periodic linear interpolation along each ring between
/// the nearest valid bins; rings without any valid bin copy the nearest ring
/// that has one (the inner one on ties). Returns `None` when nothing is
/// valid.
pub fn fill_invalid<T: Scalar>(pm: &PolarMap<T>) -> Option<Vec<Vec<T>>> {
    let (na, nr) = (pm.geometry.azimuth_bins, pm.geometry.radius_bins);
    let mut rings: Vec<Option<Vec<T>>> = (0..nr)
        .map(|k| {
            let vals = pm.values.row(k);
            let ok = pm.valid.row(k);
            let idx: Vec<usize> = (0..na).filter(|&a| ok[a]).collect();
            if idx.is_empty() {
                return None;
            }
            let mut out = vals.to_vec();
            for (n, &a0) in idx.iter().enumerate() {
                let a1 = idx[(n + 1) % idx.len()];
                let gap = if a1 > a0 { a1 - a0 } else { a1 + na - a0 };
                let (v0, v1) = (vals[a0], vals[a1]);
                for s in 1..gap {
                    let t = T::lit(s as f64 / gap as f64);
                    out[(a0 + s) % na] = v0 + t * (v1 - v0);
                }
            }
            Some(out)
        })
        .collect();
    let have: Vec<usize> = (0..nr).filter(|&k| rings[k].is_some()).collect();
    if have.is_empty() {
        return None;
    }
    for k in 0..nr {
        if rings[k].is_none() {
            let src = *have.iter().min_by_key(|&&h| (h.abs_diff(k), h)).expect("non-empty");
            rings[k] = rings[src].clone();
        }
    }
    Some(rings.into_iter().map(|r| r.expect("filled")).collect())
}

pub fn azimuthal_notch_filter<T: Scalar>(pm: &PolarMap<T>, cfg: &FilterConfig) -> PolarMap<T> {
    let (na, nr) = (pm.geometry.azimuth_bins, pm.geometry.radius_bins);
    let Some(rings) = fill_invalid(pm) else {
        return pm.clone();
    };
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(na);
    let inv = planner.plan_fft_inverse(na);

    // Azimuthal spectrum per ring.
    let mut spec: Vec<Vec<Complex<T>>> = rings
        .iter()
        .map(|ring| {
            let mut buf: Vec<Complex<T>> = ring.iter().map(|&v| Complex::new(v, T::zero())).collect();
            fwd.process(&mut buf);
            buf
        })
        .collect();

    let gains: Vec<T> = (0..na)
        .map(|b| {
            let m = b.min(na - b);
            if m == cfg.notch_order {
                T::zero()
            } else {
                T::lit(rolloff(m as f64, cfg.k_az as f64, cfg.rolloff_bins))
            }
        })
        .collect();
    for row in &mut spec {
        for (c, &g) in row.iter_mut().zip(&gains) {
            *c = *c * g;
        }
    }

    if let Some(k_rad) = cfg.k_rad {
        // Mirror padding to 2R makes bin `q` correspond to q/2 cycles per
        // radial range.
        let n2 = 2 * nr;
        let rf = planner.plan_fft_forward(n2);
        let ri = planner.plan_fft_inverse(n2);
        let rgain: Vec<T> = (0..n2)
            .map(|q| T::lit(rolloff(q.min(n2 - q) as f64 / 2.0, k_rad, cfg.rolloff_bins / 2.0)))
            .collect();
        let scale = T::lit(1.0 / n2 as f64);
        let mut col = vec![Complex::new(T::zero(), T::zero()); n2];
        for b in 0..na {
            let m = b.min(na - b);
            if m <= cfg.radial_exempt_order || gains[b] == T::zero() {
                continue;
            }
            for k in 0..nr {
                col[k] = spec[k][b];
                col[n2 - 1 - k] = spec[k][b];
            }
            rf.process(&mut col);
            for (c, &g) in col.iter_mut().zip(&rgain) {
                *c = *c * g;
            }
            ri.process(&mut col);
            for k in 0..nr {
                spec[k][b] = col[k] * scale;
            }
        }
    }

    let scale = T::lit(1.0 / na as f64);
    let mut out = pm.clone();
    for (k, row) in spec.iter_mut().enumerate() {
        inv.process(row);
        let valid = pm.valid.row(k).to_vec();
        for (a, c) in row.iter().enumerate() {
            out.values.set(a, k, if valid[a] { c.re * scale } else { T::nan() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflectance::PolarGeometry;
    use rand::{Rng, SeedableRng};

    fn geometry() -> PolarGeometry {
        PolarGeometry::default()
    }

    /// Direct O(A²) DFT coefficient of order `m` for one ring.
    fn dft(ring: &[f64], m: usize) -> (f64, f64) {
        let n = ring.len() as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (a, v) in ring.iter().enumerate() {
            let t = std::f64::consts::TAU * (m * a) as f64 / n;
            re += v * t.cos();
            im -= v * t.sin();
        }
        (re / n, im / n)
    }

    #[test]
    fn removes_first_order_keeps_zero_and_second() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = geometry();
        let per_ring: Vec<(f64, f64, f64, f64)> = (0..g.radius_bins)
            .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(0.5..4.0), rng.random_range(0.0..6.3), rng.random_range(-2.0..2.0)))
            .collect();
        let pm = PolarMap::<f64>::from_fn(g, |_, _| 0.0);
        let mut pm = pm;
        for (k, &(c, a, ph, b)) in per_ring.iter().enumerate() {
            for n in 0..g.azimuth_bins {
                let t = g.azimuth(n);
                pm.values.set(n, k, c + a * (t + ph).cos() + b * (2.0 * t).cos());
            }
        }
        let out = azimuthal_notch_filter(&pm, &FilterConfig::default());
        for (k, &(c, a, _, b)) in per_ring.iter().enumerate() {
            let ring = out.ring(k);
            let (r1, i1) = dft(ring, 1);
            assert!(2.0 * r1.hypot(i1) < 1e-10 * a);
            let (r2, i2) = dft(ring, 2);
            assert!((2.0 * r2 - b).abs() < 1e-10 * b.abs().max(1e-300) + 1e-13);
            assert!(i2.abs() < 1e-12);
            let (r0, _) = dft(ring, 0);
            assert!((r0 - c).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_spectrum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g = geometry();
        let pm = PolarMap::<f64>::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        let out = azimuthal_notch_filter(&pm, &FilterConfig::default());
        for k in 0..g.radius_bins {
            let (r1, i1) = dft(out.ring(k), 1);
            assert!(r1.hypot(i1) < 1e-12);
            for m in [40, 64, 100, 128] {
                let (r, i) = dft(out.ring(k), m);
                assert!(r.hypot(i) < 1e-12);
            }
        }
        let energy = |p: &PolarMap<f64>| -> f64 {
            (0..g.radius_bins)
                .map(|k| {
                    let ring = p.ring(k);
                    let m = ring.iter().sum::<f64>() / ring.len() as f64;
                    ring.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                })
                .sum()
        };
        assert!(energy(&out) < energy(&pm));
    }

    #[test]
    fn azimuth_only_filter_reduces_every_ring_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = geometry();
        let pm = PolarMap::<f64>::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        let cfg = FilterConfig { k_rad: None, ..FilterConfig::default() };
        let out = azimuthal_notch_filter(&pm, &cfg);
        let var = |r: &[f64]| {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        };
        for k in 0..g.radius_bins {
            assert!(var(out.ring(k)) <= var(pm.ring(k)) + 1e-12);
        }
    }

    #[test]
    fn idempotent_and_linear_f32() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let g = geometry();
        let x = PolarMap::<f64>::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        let once = azimuthal_notch_filter(&x, &FilterConfig::default());
        let twice = azimuthal_notch_filter(&once, &FilterConfig::default());
        for (a, b) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
        let xf = PolarMap { geometry: g, values: x.values.map(|&v| v as f32), valid: x.valid.clone() };
        let of = azimuthal_notch_filter(&xf, &FilterConfig::default());
        for (a, b) in once.values.as_slice().iter().zip(of.values.as_slice()) {
            assert!((a - *b as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn invalid_bins_are_remasked() {
        let g = geometry();
        let mut pm = PolarMap::<f64>::from_fn(g, |r, _| r);
        for a in 0..g.azimuth_bins {
            for k in 0..10 {
                pm.valid.set(a, k, false);
                pm.values.set(a, k, f64::NAN);
            }
        }
        for a in 10..20 {
            pm.valid.set(a, 30, false);
            pm.values.set(a, 30, f64::NAN);
        }
        let out = azimuthal_notch_filter(&pm, &FilterConfig::default());
        for k in 0..g.radius_bins {
            for a in 0..g.azimuth_bins {
                let v = *out.values.get(a, k);
                assert_eq!(v.is_finite(), *pm.valid.get(a, k));
            }
        }
    }

    #[test]
    fn periodic_fill_is_linear() {
        let g = PolarGeometry { azimuth_bins: 64, radius_bins: 2, r_min: 1.0, r_max: 2.0 };
        let mut pm = PolarMap::<f64>::from_fn(g, |_, _| 0.0);
        for a in 0..64 {
            pm.valid.set(a, 0, a == 0 || a == 32);
            pm.valid.set(a, 1, false);
        }
        pm.values.set(0, 0, 0.0);
        pm.values.set(32, 0, 4.0);
        let rings = fill_invalid(&pm).unwrap();
        assert_eq!(rings[0][16], 2.0);
        assert_eq!(rings[0][48], 2.0);
        assert_eq!(rings[1], rings[0]);
    }
}
