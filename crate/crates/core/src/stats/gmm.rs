//! Gaussian mixture clustering by expectation maximization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tolerance: f64,
    pub regularization: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { k: 3, restarts: 10, max_iter: 500, tolerance: 1e-8, regularization: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` covariance per component.
    pub covariances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub assignments: Vec<usize>,
    pub log_likelihood: f64,
    /// Log-likelihood after every EM iteration of the selected restart.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn log_pdf_all(points: &[DVector<f64>], comps: &[Component]) -> Option<Vec<Vec<f64>>> {
    let d = points[0].len() as f64;
    let mut out = Vec::with_capacity(comps.len());
    for c in comps {
        let chol = Cholesky::<f64, Dyn>::new(c.cov.clone())?;
        let l = chol.l();
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let base = c.weight.ln() - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet);
        out.push(
            points
                .iter()
                .map(|x| {
                    let y = l.solve_lower_triangular(&(x - &c.mean)).expect("non-singular factor");
                    base - 0.5 * y.norm_squared()
                })
                .collect(),
        );
    }
    Some(out)
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// E step: responsibilities (component-major) and total log-likelihood.
fn e_step(points: &[DVector<f64>], comps: &[Component]) -> Option<(Vec<Vec<f64>>, f64)> {
    let lp = log_pdf_all(points, comps)?;
    let n = points.len();
    let mut resp = vec![vec![0.0; n]; comps.len()];
    let mut ll = 0.0;
    for i in 0..n {
        let z = log_sum_exp(lp.iter().map(|row| row[i]));
        ll += z;
        for (k, row) in lp.iter().enumerate() {
            resp[k][i] = (row[i] - z).exp();
        }
    }
    Some((resp, ll))
}

fn m_step(points: &[DVector<f64>], resp: &[Vec<f64>], reg: f64) -> Vec<Component> {
    let n = points.len();
    let d = points[0].len();
    resp.iter()
        .map(|r| {
            let nk: f64 = r.iter().sum();
            let mut mean = DVector::zeros(d);
            for (x, &w) in points.iter().zip(r) {
                mean += x * w;
            }
            mean /= nk.max(f64::MIN_POSITIVE);
            let mut cov = DMatrix::zeros(d, d);
            for (x, &w) in points.iter().zip(r) {
                let dx = x - &mean;
                cov += &dx * dx.transpose() * w;
            }
            cov /= nk.max(f64::MIN_POSITIVE);
            for j in 0..d {
                cov[(j, j)] += reg;
            }
            Component { weight: nk / n as f64, mean, cov }
        })
        .collect()
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance to the nearest chosen centre.
fn kmeans_pp<R: Rng>(points: &[DVector<f64>], k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut centres = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - &centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if u < v {
                    pick = i;
                    break;
                }
                u -= v;
            }
            pick
        };
        let c = points[next].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min((p - &c).norm_squared());
        }
        centres.push(c);
    }
    centres
}

struct RunResult {
    comps: Vec<Component>,
    ll: f64,
    trace: Vec<f64>,
    warnings: Vec<String>,
}

fn run_em(points: &[DVector<f64>], opts: &GmmOptions, seed: u64, restart: usize) -> Option<RunResult> {
    let n = points.len();
    let mut rng = substream(seed, restart as u64);
    let centres = kmeans_pp(points, opts.k, &mut rng);
    // Initial responsibilities: hard assignment to the nearest centre.
    let mut resp = vec![vec![0.0; n]; opts.k];
    for (i, p) in points.iter().enumerate() {
        let best = (0..opts.k)
            .min_by(|&a, &b| (p - &centres[a]).norm_squared().total_cmp(&(p - &centres[b]).norm_squared()))
            .unwrap_or(0);
        resp[best][i] = 1.0;
    }
    let mut warnings = Vec::new();
    resp.retain(|r| r.iter().sum::<f64>() > 0.0);
    let mut comps = m_step(points, &resp, opts.regularization);
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..opts.max_iter {
        let (r, ll) = e_step(points, &comps)?;
        trace.push(ll);
        let converged = (ll - prev).abs() < opts.tolerance;
        prev = ll;
        resp = r;
        // Prune components that have collapsed below one point's weight.
        let before = resp.len();
        resp.retain(|r| r.iter().sum::<f64>() >= 1.0);
        if resp.len() < before {
            warnings.push(format!("pruned {} degenerate component(s)", before - resp.len()));
            if resp.is_empty() {
                return None;
            }
            comps = m_step(points, &resp, opts.regularization);
            prev = f64::NEG_INFINITY;
            trace.clear();
            continue;
        }
        if converged {
            break;
        }
        comps = m_step(points, &resp, opts.regularization);
    }
    let (_, ll) = e_step(points, &comps)?;
    Some(RunResult { comps, ll, trace, warnings })
}

/// Fits a `k`-component full-covariance mixture, keeping the restart with
/// the highest log-likelihood.
pub fn gmm_fit(points: &[Vec<f64>], seed: u64, opts: &GmmOptions) -> Result<ClusterModel, StatsError> {
    let n = points.len();
    if opts.k == 0 || n < 5 * opts.k {
        return Err(StatsError::TooFew { what: "gmm points", need: 5 * opts.k.max(1), got: n });
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
        return Err(StatsError::Shape("points must share a non-zero dimension and be finite".into()));
    }
    let pts: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let mut best: Option<RunResult> = None;
    for restart in 0..opts.restarts.max(1) {
        if let Some(run) = run_em(&pts, opts, seed, restart) {
            if best.as_ref().is_none_or(|b| run.ll > b.ll) {
                best = Some(run);
            }
        }
    }
    let run = best.ok_or_else(|| StatsError::Numeric("every EM restart failed".into()))?;
    let lp = log_pdf_all(&pts, &run.comps).ok_or_else(|| StatsError::Numeric("covariance not positive definite".into()))?;
    let assignments = (0..n)
        .map(|i| (0..run.comps.len()).max_by(|&a, &b| lp[a][i].total_cmp(&lp[b][i])).unwrap_or(0))
        .collect();
    Ok(ClusterModel {
        k: run.comps.len(),
        means: run.comps.iter().map(|c| c.mean.iter().copied().collect()).collect(),
        covariances: run.comps.iter().map(|c| c.cov.transpose().iter().copied().collect()).collect(),
        weights: run.comps.iter().map(|c| c.weight).collect(),
        assignments,
        log_likelihood: run.ll,
        trace: run.trace,
        warnings: run.warnings,
    })
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let sum_a: f64 = table.iter().map(|row| c2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|row| row[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

#[cfg(test)]
mod unit {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn planted(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = substream(seed, 0);
        let z = Normal::new(0.0, 1.0).unwrap();
        let centres = [[0.0, 0.0], [8.0, 1.0], [2.0, 9.0]];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, m) in centres.iter().enumerate() {
            for _ in 0..80 {
                pts.push(vec![m[0] + z.sample(&mut rng), m[1] + 0.7 * z.sample(&mut rng)]);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn recovers_planted_clusters() {
        let (pts, truth) = planted(3);
        let m = gmm_fit(&pts, 11, &GmmOptions::default()).unwrap();
        assert!(adjusted_rand_index(&m.assignments, &truth) > 0.8);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for w in m.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        assert_eq!(m, gmm_fit(&pts, 11, &GmmOptions::default()).unwrap());
    }

    #[test]
    fn single_component_is_sample_moments() {
        let (pts, _) = planted(4);
        let m = gmm_fit(&pts, 1, &GmmOptions { k: 1, ..GmmOptions::default() }).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        let sxy = pts.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum::<f64>() / n;
        let sxx = pts.iter().map(|p| (p[0] - mx).powi(2)).sum::<f64>() / n;
        assert!((m.means[0][0] - mx).abs() < 1e-9 && (m.means[0][1] - my).abs() < 1e-9);
        assert!((m.covariances[0][1] - sxy).abs() < 1e-9);
        assert!((m.covariances[0][0] - sxx - 1e-6).abs() < 1e-9);
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // sklearn.metrics.adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285714
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.5714285714285714).abs() < 1e-12);
        assert!(gmm_fit(&vec![vec![0.0]; 10], 1, &GmmOptions::default()).is_err());
    }
}
