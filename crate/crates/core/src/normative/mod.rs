//! Covariate-adjusted normative model, low-reflectance flagging, diagnostic
//! parameters and loss-pattern classification.

mod pattern;
mod thickness;

pub use pattern::{classify_pattern, PatternClass, QUADRANT_TRACKS};
pub use thickness::{fit_thickness_norms, thickness_parameters, ThicknessNorms, ThicknessParameters, MAX_PROFILE_GAP_DEG};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::superpixel::EyeFeatures;
use crate::volume::{Group, Sex, SubjectMeta};

/// One-sided standard normal quantiles for the 5% and 1% cutoffs.
pub const Z_05: f64 = 1.6448536269514722;
pub const Z_01: f64 = 2.3263478740408408;
pub const REFERENCE_AGE: f64 = 50.0;
pub const MIN_TRAINING_EYES: usize = 20;

#[derive(Debug, Error)]
pub enum NormativeError {
    #[error("normative fit needs at least {min} eyes, got {got}")]
    TooFewEyes { min: usize, got: usize },
    #[error("training eye {0} is not labelled normal")]
    NotNormal(String),
    #[error("eye {0} lacks the axial length covariate")]
    MissingCovariate(String),
    #[error("covariate design is rank deficient")]
    RankDeficient,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate normative distribution: {0}")]
    Degenerate(String),
    #[error("thickness profile has a gap of {0:.1} degrees")]
    ProfileGap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutoffLevel {
    #[serde(rename = "5%")]
    Five,
    #[serde(rename = "1%")]
    One,
}

/// Covariate coefficients of
/// `value = u_i + β_age·age + β_ax·ax + β_int·age·ax + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub intercept: f64,
    pub age: f64,
    pub axial_length: f64,
    pub age_axial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub training_subjects: Vec<String>,
    pub seed: u64,
    /// Processing configuration hash shared by the training features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormativeModel {
    pub beta: Coefficients,
    /// Standard errors of the intercept and slopes at the reference point
    /// (the centred parametrization), and of the interaction.
    pub beta_se: Coefficients,
    /// Sex effect evaluated alongside the covariates (dB, female minus
    /// male) and its standard error; not used for adjustment.
    pub sex_effect: Option<[f64; 2]>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub cutoff5: Vec<f64>,
    pub cutoff1: Vec<f64>,
    pub reference_age: f64,
    pub reference_axial: f64,
    /// Linear normalization constant used when the training features were
    /// computed.
    pub normalization_constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<ThicknessNorms>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Normal,
    Borderline,
    Abnormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticParameters {
    pub average_reflectance: f64,
    pub low_count_5: usize,
    pub low_count_1: usize,
    pub focal_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_overall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_inferior_quadrant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_flv: Option<f64>,
}

fn axial(meta: &SubjectMeta) -> Result<f64, NormativeError> {
    meta.axial_length.ok_or_else(|| NormativeError::MissingCovariate(meta.subject_id.clone()))
}

fn eye_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// OLS of `y` on the columns of `x`; returns coefficients and their
/// standard errors.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), NormativeError> {
    let (n, p) = x.shape();
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(NormativeError::RankDeficient);
    }
    let coef = svd.solve(y, 0.0).map_err(|_| NormativeError::RankDeficient)?;
    let resid = y - x * &coef;
    let dof = n.saturating_sub(p).max(1) as f64;
    let s2 = resid.norm_squared() / dof;
    let xtx_inv = (x.transpose() * x).try_inverse().ok_or(NormativeError::RankDeficient)?;
    let se = DVector::from_iterator(p, (0..p).map(|j| (s2 * xtx_inv[(j, j)]).max(0.0).sqrt()));
    Ok((coef, se))
}

/// Fits the normative model to defect-free training eyes. The per-superpixel
/// intercepts absorb location effects, so the shared covariate slopes come
/// from a regression of eye means on the covariates. Covariates are centred
/// at age 50 and the cohort-mean axial length for the solve.
pub fn fit_normative(
    training: &[EyeFeatures],
    normalization_constant: f64,
    seed: u64,
) -> Result<NormativeModel, NormativeError> {
    if training.len() < MIN_TRAINING_EYES {
        return Err(NormativeError::TooFewEyes { min: MIN_TRAINING_EYES, got: training.len() });
    }
    let n_cells = training[0].superpixel_values.len();
    for e in training {
        if e.subject.group != Group::Normal {
            return Err(NormativeError::NotNormal(e.subject.subject_id.clone()));
        }
        if e.superpixel_values.len() != n_cells {
            return Err(NormativeError::Shape(format!(
                "{} has {} superpixels, expected {n_cells}",
                e.subject.subject_id,
                e.superpixel_values.len()
            )));
        }
    }
    let axes: Vec<f64> = training.iter().map(|e| axial(&e.subject)).collect::<Result<_, _>>()?;
    let n = training.len();
    let ax_ref = axes.iter().sum::<f64>() / n as f64;

    let design = |with_sex: bool| {
        let p = if with_sex { 5 } else { 4 };
        DMatrix::from_fn(n, p, |r, c| {
            let a = training[r].subject.age - REFERENCE_AGE;
            let x = axes[r] - ax_ref;
            match c {
                0 => 1.0,
                1 => a,
                2 => x,
                3 => a * x,
                _ => (training[r].subject.sex == Sex::Female) as u8 as f64,
            }
        })
    };
    let y = DVector::from_iterator(n, training.iter().map(|e| eye_mean(&e.superpixel_values)));
    let (g, g_se) = ols(&design(false), &y)?;

    // Back to the raw parametrization:
    // γ_a·a + γ_x·x + γ_ax·a·x
    //   = β_age·(age−50) + β_ax·(ax−ax_ref) + β_int·(age·ax − 50·ax_ref).
    let beta_int = g[3];
    let beta = Coefficients {
        intercept: g[0] - g[1] * REFERENCE_AGE - g[2] * ax_ref + g[3] * REFERENCE_AGE * ax_ref,
        age: g[1] - g[3] * ax_ref,
        axial_length: g[2] - g[3] * REFERENCE_AGE,
        age_axial: beta_int,
    };
    let beta_se = Coefficients {
        intercept: g_se[0],
        age: g_se[1],
        axial_length: g_se[2],
        age_axial: g_se[3],
    };

    let both_sexes = training.iter().any(|e| e.subject.sex == Sex::Female)
        && training.iter().any(|e| e.subject.sex == Sex::Male)
        && training.iter().all(|e| e.subject.sex != Sex::Unspecified);
    let sex_effect = if both_sexes && n > 5 {
        ols(&design(true), &y).ok().map(|(c, se)| [c[4], se[4]])
    } else {
        None
    };

    let mut model = NormativeModel {
        beta,
        beta_se,
        sex_effect,
        mu: vec![0.0; n_cells],
        sigma: vec![0.0; n_cells],
        cutoff5: vec![0.0; n_cells],
        cutoff1: vec![0.0; n_cells],
        reference_age: REFERENCE_AGE,
        reference_axial: ax_ref,
        normalization_constant,
        thickness: None,
        provenance: Provenance {
            training_subjects: training.iter().map(|e| e.subject.subject_id.clone()).collect(),
            seed,
            config_hash: training[0].config_hash.clone(),
        },
    };

    let adjusted: Vec<Vec<f64>> = training.iter().map(|e| adjust(e, &model)).collect::<Result<_, _>>()?;
    for i in 0..n_cells {
        let col = adjusted.iter().map(|v| v[i]);
        let mu = col.clone().sum::<f64>() / n as f64;
        let var = col.map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = var.sqrt();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(NormativeError::Degenerate(format!("superpixel {i} has zero spread")));
        }
        model.mu[i] = mu;
        model.sigma[i] = sigma;
        model.cutoff5[i] = mu - Z_05 * sigma;
        model.cutoff1[i] = mu - Z_01 * sigma;
    }

    let profiles: Vec<&[f64]> = training.iter().filter_map(|e| e.thickness_profile.as_deref()).collect();
    if profiles.len() == n {
        model.thickness = Some(fit_thickness_norms(&profiles)?);
    }
    Ok(model)
}

impl NormativeModel {
    pub fn n_cells(&self) -> usize {
        self.mu.len()
    }

    /// Age and axial-length slopes at the reference point, dB per unit.
    pub fn slopes_at_reference(&self) -> [f64; 2] {
        [
            self.beta.age + self.beta.age_axial * self.reference_axial,
            self.beta.axial_length + self.beta.age_axial * self.reference_age,
        ]
    }

    /// Total covariate adjustment subtracted from an eye's values, dB.
    pub fn covariate_offset(&self, meta: &SubjectMeta) -> Result<f64, NormativeError> {
        let ax = axial(meta)?;
        let b = &self.beta;
        Ok(b.age * (meta.age - self.reference_age)
            + b.axial_length * (ax - self.reference_axial)
            + b.age_axial * (meta.age * ax - self.reference_age * self.reference_axial))
    }

    /// Copy whose reflectance quantities are shifted by `delta_db`, matching
    /// training features renormalized by the same amount.
    pub fn shifted(&self, delta_db: f64) -> Self {
        let mut m = self.clone();
        m.beta.intercept += delta_db;
        for v in m.mu.iter_mut().chain(m.cutoff5.iter_mut()).chain(m.cutoff1.iter_mut()) {
            *v += delta_db;
        }
        m.normalization_constant *= 10f64.powf(-delta_db / 10.0);
        m
    }

    fn cutoff(&self, level: CutoffLevel) -> &[f64] {
        match level {
            CutoffLevel::Five => &self.cutoff5,
            CutoffLevel::One => &self.cutoff1,
        }
    }
}

pub fn adjust(features: &EyeFeatures, model: &NormativeModel) -> Result<Vec<f64>, NormativeError> {
    if features.superpixel_values.len() != model.n_cells() {
        return Err(NormativeError::Shape(format!(
            "{} has {} superpixels, model has {}",
            features.subject.subject_id,
            features.superpixel_values.len(),
            model.n_cells()
        )));
    }
    let off = model.covariate_offset(&features.subject)?;
    Ok(features.superpixel_values.iter().map(|v| v - off).collect())
}

pub fn flag_low(adjusted: &[f64], model: &NormativeModel, level: CutoffLevel) -> (Vec<bool>, usize) {
    let mask: Vec<bool> = adjusted.iter().zip(model.cutoff(level)).map(|(a, c)| a < c).collect();
    let count = mask.iter().filter(|&&m| m).count();
    (mask, count)
}

/// Sum of deviations from the normative mean over low superpixels, divided
/// by the number of superpixels.
pub fn focal_loss(adjusted: &[f64], model: &NormativeModel, level: CutoffLevel) -> f64 {
    let (mask, _) = flag_low(adjusted, model, level);
    let sum: f64 = mask
        .iter()
        .zip(adjusted.iter().zip(&model.mu))
        .filter(|(m, _)| **m)
        .map(|(_, (a, mu))| a - mu)
        .sum();
    sum / adjusted.len() as f64
}

pub fn average_reflectance(adjusted: &[f64]) -> f64 {
    eye_mean(adjusted)
}

pub fn significance_map(adjusted: &[f64], model: &NormativeModel) -> Vec<Significance> {
    adjusted
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if a < model.cutoff1[i] {
                Significance::Abnormal
            } else if a < model.cutoff5[i] {
                Significance::Borderline
            } else {
                Significance::Normal
            }
        })
        .collect()
}

/// All reflectance and, when available, thickness parameters of one eye.
pub fn diagnostic_parameters(
    features: &EyeFeatures,
    model: &NormativeModel,
    level: CutoffLevel,
) -> Result<(Vec<f64>, DiagnosticParameters), NormativeError> {
    let adjusted = adjust(features, model)?;
    let (_, low5) = flag_low(&adjusted, model, CutoffLevel::Five);
    let (_, low1) = flag_low(&adjusted, model, CutoffLevel::One);
    let mut params = DiagnosticParameters {
        average_reflectance: average_reflectance(&adjusted),
        low_count_5: low5,
        low_count_1: low1,
        focal_loss: focal_loss(&adjusted, model, level),
        thickness_overall: None,
        thickness_inferior_quadrant: None,
        thickness_flv: None,
    };
    if let (Some(profile), Some(norms)) = (&features.thickness_profile, &model.thickness) {
        let t = thickness_parameters(profile, norms)?;
        params.thickness_overall = Some(t.overall);
        params.thickness_inferior_quadrant = Some(t.quadrants[3]);
        params.thickness_flv = Some(t.flv);
    }
    Ok((adjusted, params))
}

/// Training residuals standardized by the per-superpixel SD, pooled over
/// eyes and superpixels.
pub fn standardized_residuals(training: &[EyeFeatures], model: &NormativeModel) -> Result<Vec<f64>, NormativeError> {
    let mut out = Vec::with_capacity(training.len() * model.n_cells());
    for e in training {
        let a = adjust(e, model)?;
        out.extend(a.iter().enumerate().map(|(i, v)| (v - model.mu[i]) / model.sigma[i]));
    }
    Ok(out)
}
