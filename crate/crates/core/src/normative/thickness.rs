use serde::{Deserialize, Serialize};

use super::{NormativeError, Z_05};

/// Largest tolerated run of missing profile samples, degrees.
pub const MAX_PROFILE_GAP_DEG: f64 = 10.0;

/// Per-azimuth normative statistics of the circumpapillary thickness
/// profile, µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessNorms {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub cutoff5: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessParameters {
    pub overall: f64,
    /// Temporal, superior, nasal, inferior quadrant means (right-eye frame).
    pub quadrants: [f64; 4],
    /// Focal loss volume, percent; negative for loss.
    pub flv: f64,
}

fn longest_gap_deg(profile: &[f64]) -> f64 {
    let n = profile.len();
    if profile.iter().all(|v| !v.is_finite()) {
        return 360.0;
    }
    let mut best = 0;
    let mut run = 0;
    for k in 0..2 * n {
        if profile[k % n].is_finite() {
            run = 0;
        } else {
            run += 1;
            best = best.max(run);
        }
    }
    best.min(n) as f64 * 360.0 / n as f64
}

pub fn fit_thickness_norms(profiles: &[&[f64]]) -> Result<ThicknessNorms, NormativeError> {
    let n = profiles.first().map(|p| p.len()).unwrap_or(0);
    if n == 0 || profiles.iter().any(|p| p.len() != n) {
        return Err(NormativeError::Shape("thickness profiles differ in length".into()));
    }
    let mut norms = ThicknessNorms { mu: vec![0.0; n], sigma: vec![0.0; n], cutoff5: vec![0.0; n] };
    for a in 0..n {
        let vals: Vec<f64> = profiles.iter().map(|p| p[a]).filter(|v| v.is_finite()).collect();
        if vals.len() < 2 {
            return Err(NormativeError::Degenerate(format!("thickness sample {a} has fewer than two values")));
        }
        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
        norms.mu[a] = mu;
        norms.sigma[a] = sd;
        norms.cutoff5[a] = mu - Z_05 * sd;
    }
    Ok(norms)
}

/// Overall and quadrant means of a thickness profile and its focal loss
/// volume `100 · Σ_low (p − m)/m / n` over samples below the 5% cutoff.
pub fn thickness_parameters(profile: &[f64], norms: &ThicknessNorms) -> Result<ThicknessParameters, NormativeError> {
    let n = profile.len();
    if n == 0 || norms.mu.len() != n {
        return Err(NormativeError::Shape(format!(
            "profile has {n} samples, norms have {}",
            norms.mu.len()
        )));
    }
    let gap = longest_gap_deg(profile);
    if gap > MAX_PROFILE_GAP_DEG {
        return Err(NormativeError::ProfileGap(gap));
    }
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    let mut flv = 0.0;
    for (a, &p) in profile.iter().enumerate() {
        if !p.is_finite() {
            continue;
        }
        let deg = 360.0 * a as f64 / n as f64;
        let q = if !(45.0..315.0).contains(&deg) {
            0
        } else if deg < 135.0 {
            1
        } else if deg < 225.0 {
            2
        } else {
            3
        };
        sums[q] += p;
        counts[q] += 1;
        if p < norms.cutoff5[a] {
            flv += (p - norms.mu[a]) / norms.mu[a];
        }
    }
    let valid: usize = counts.iter().sum();
    let overall = sums.iter().sum::<f64>() / valid as f64;
    let quadrants = [0, 1, 2, 3].map(|q| sums[q] / counts[q] as f64);
    Ok(ThicknessParameters { overall, quadrants, flv: 100.0 * flv / n as f64 })
}
