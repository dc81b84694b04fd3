use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::normative::{
    classify_pattern, diagnostic_parameters, flag_low, significance_map, CutoffLevel, DiagnosticParameters,
    NormativeModel, PatternClass, Significance,
};
use crate::superpixel::{EyeFeatures, DEFAULT_SEGMENTS};
use crate::volume::Group;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    /// Hash of the serialized normative model.
    pub model_id: String,
    pub software_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub subject_id: String,
    pub group: Group,
    pub cutoff_level: CutoffLevel,
    pub parameters: DiagnosticParameters,
    /// Covariate-adjusted superpixel reflectance, dB.
    pub adjusted: Vec<f64>,
    pub significance: Vec<Significance>,
    pub pattern: PatternClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    pub provenance: ReportProvenance,
}

impl DiagnosticReport {
    /// Significance map as CSV rows `track,segment,class`.
    pub fn significance_csv(&self) -> String {
        let mut out = String::from("track,segment,class\n");
        for (i, s) in self.significance.iter().enumerate() {
            let class = match s {
                Significance::Normal => "normal",
                Significance::Borderline => "borderline",
                Significance::Abnormal => "abnormal",
            };
            out.push_str(&format!("{},{},{}\n", i / DEFAULT_SEGMENTS, i % DEFAULT_SEGMENTS, class));
        }
        out
    }
}

pub fn model_id(model: &NormativeModel) -> String {
    let json = serde_json::to_vec(model).expect("model serializes");
    Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Adjusts one eye against the model, computes its parameters and classifies
/// the pattern of superpixels below the cutoff at `level`.
pub fn diagnose(
    features: &EyeFeatures,
    model: &NormativeModel,
    level: CutoffLevel,
) -> Result<DiagnosticReport, PipelineError> {
    if let (Some(a), Some(b)) = (&features.config_hash, &model.provenance.config_hash) {
        if a != b {
            return Err(PipelineError::MixedConfig(b.clone(), a.clone()));
        }
    }
    let n = model.n_cells();
    if n % DEFAULT_SEGMENTS != 0 {
        return Err(PipelineError::Config(format!("{n} superpixels do not form {DEFAULT_SEGMENTS} segments per track")));
    }
    let eye = features.renormalized(model.normalization_constant);
    let (adjusted, parameters) = diagnostic_parameters(&eye, model, level)?;
    let (mask, _) = flag_low(&adjusted, model, level);
    Ok(DiagnosticReport {
        subject_id: eye.subject.subject_id.clone(),
        group: eye.subject.group,
        cutoff_level: level,
        parameters,
        significance: significance_map(&adjusted, model),
        pattern: classify_pattern(&mask, n / DEFAULT_SEGMENTS, DEFAULT_SEGMENTS),
        adjusted,
        cluster: None,
        provenance: ReportProvenance {
            model_id: model_id(model),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: features.config_hash.clone(),
        },
    })
}
