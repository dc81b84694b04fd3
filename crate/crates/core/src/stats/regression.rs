//! Two-segment linear regression and repeatability.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{mean, StatsError};

/// Split point between early and advanced visual-field loss, dB.
pub const DEFAULT_KNOT_DB: f64 = -6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Two-sided t-test of zero slope.
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    pub knot: f64,
    /// Fit on `x ≤ knot`.
    pub left: Option<LineFit>,
    /// Fit on `x > knot`.
    pub right: Option<LineFit>,
    /// A side had fewer than three points or no spread in `x`.
    pub partial: bool,
}

fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let df = (n - 2) as f64;
    let slope_se = (rss / df / sxx).sqrt();
    let p = if slope_se > 0.0 {
        let t = slope / slope_se;
        let dist = StudentsT::new(0.0, 1.0, df).ok()?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
    } else if slope == 0.0 {
        1.0
    } else {
        0.0
    };
    Some(LineFit { slope, intercept, slope_se, p, n })
}

/// Independent least-squares lines on either side of a fixed knot.
pub fn piecewise_two_segment(x: &[f64], y: &[f64], knot: f64) -> Result<PiecewiseFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Shape(format!("{} vs {} observations", x.len(), y.len())));
    }
    let split = |right: bool| -> (Vec<f64>, Vec<f64>) {
        x.iter().zip(y).filter(|(a, _)| (**a > knot) == right).map(|(a, b)| (*a, *b)).unzip()
    };
    let (lx, ly) = split(false);
    let (rx, ry) = split(true);
    let left = line_fit(&lx, &ly);
    let right = line_fit(&rx, &ry);
    Ok(PiecewiseFit { knot, left, right, partial: left.is_none() || right.is_none() })
}

/// Knot chosen among the observed `x` values to minimize the total residual
/// sum of squares with at least three points per side.
pub fn piecewise_estimated_knot(x: &[f64], y: &[f64]) -> Result<PiecewiseFit, StatsError> {
    let mut cands: Vec<f64> = x.to_vec();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let rss = |f: &PiecewiseFit, side: bool| -> f64 {
        let line = if side { f.right } else { f.left };
        let Some(l) = line else { return f64::INFINITY };
        x.iter()
            .zip(y)
            .filter(|(a, _)| (**a > f.knot) == side)
            .map(|(a, b)| (b - l.intercept - l.slope * a).powi(2))
            .sum()
    };
    let mut best: Option<(f64, PiecewiseFit)> = None;
    for k in cands {
        let f = piecewise_two_segment(x, y, k)?;
        if f.partial {
            continue;
        }
        let total = rss(&f, false) + rss(&f, true);
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, f));
        }
    }
    best.map(|(_, f)| f).ok_or(StatsError::TooFew { what: "piecewise side", need: 3, got: x.len() / 2 })
}

/// Pooled repeat-scan SD: RMS over eyes and superpixels of the two-scan SD
/// `|a − b| / √2`.
pub fn pooled_sd(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64, StatsError> {
    if pairs.len() < 2 {
        return Err(StatsError::TooFew { what: "repeat pairs", need: 2, got: pairs.len() });
    }
    let mut ss = 0.0;
    let mut count = 0usize;
    for (a, b) in pairs {
        if a.len() != b.len() {
            return Err(StatsError::Shape("repeat scans differ in length".into()));
        }
        for (x, y) in a.iter().zip(b) {
            ss += (x - y).powi(2) / 2.0;
            count += 1;
        }
    }
    Ok((ss / count as f64).sqrt())
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identity_and_constant() {
        let x: Vec<f64> = (0..40).map(|i| -20.0 + i as f64 * 0.5).collect();
        let f = piecewise_two_segment(&x, &x, DEFAULT_KNOT_DB).unwrap();
        let (l, r) = (f.left.unwrap(), f.right.unwrap());
        assert!((l.slope - 1.0).abs() < 1e-12 && (r.slope - 1.0).abs() < 1e-12);
        assert!(l.p < 0.05 && r.p < 0.05);
        let c = piecewise_two_segment(&x, &[2.0; 40], DEFAULT_KNOT_DB).unwrap();
        assert_eq!(c.left.unwrap().slope, 0.0);
        assert_eq!(c.right.unwrap().slope, 0.0);
        let few = piecewise_two_segment(&[-10.0, 0.0, 1.0, 2.0], &[1.0, 2.0, 3.0, 4.0], DEFAULT_KNOT_DB).unwrap();
        assert!(few.partial && few.left.is_none());
    }

    #[test]
    fn floor_effect() {
        let mut rng = substream(4, 0);
        let z = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..120).map(|i| -25.0 + 27.0 * i as f64 / 119.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| v.max(-6.0) + 0.8 * z.sample(&mut rng)).collect();
        let f = piecewise_two_segment(&x, &y, DEFAULT_KNOT_DB).unwrap();
        let (l, r) = (f.left.unwrap(), f.right.unwrap());
        assert!((r.slope - 1.0).abs() < 0.2 && r.p < 0.05);
        assert!(l.slope.abs() < 0.1 && l.p > 0.05, "{l:?}");
        let est = piecewise_estimated_knot(&x, &y).unwrap();
        assert!((est.knot + 6.0).abs() < 2.0, "{}", est.knot);
    }

    #[test]
    fn pooled_sd_examples() {
        let v = vec![1.0, 2.0, 3.0];
        assert_eq!(pooled_sd(&[(v.clone(), v.clone()), (v.clone(), v.clone())]).unwrap(), 0.0);
        let d = 0.7;
        let a: Vec<f64> = v.iter().map(|x| x + d).collect();
        let b: Vec<f64> = v.iter().map(|x| x - d).collect();
        let s = pooled_sd(&[(a.clone(), b.clone()), (b, a)]).unwrap();
        assert!((s - d * 2f64.sqrt()).abs() < 1e-12);
    }
}
