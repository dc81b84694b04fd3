use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::diagnose::diagnose;
use super::{check_consistent, cohort_normalization_constant, PipelineError};
use crate::normative::{diagnostic_parameters, fit_normative, CutoffLevel, NormativeModel, PatternClass};
use crate::rng::derive_seed;
use crate::stats::{
    auroc, auroc_difference_bootstrap, bootstrap_632plus, compare_correlations_bootstrap, gmm_fit, mcnemar, pearson,
    piecewise_two_segment, quantile_type7, sensitivity_at_specificity, wilcoxon_rank_sum, BootstrapEstimator,
    ClusterModel, Correlation, GmmOptions, Orientation, PiecewiseFit, RocResult, SensitivityResult, StatsError,
    DEFAULT_KNOT_DB,
};
use crate::superpixel::EyeFeatures;
use crate::volume::Group;

/// Diagnostic parameters compared in the study tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    AverageReflectance,
    LowCount,
    FocalLoss,
    ThicknessOverall,
    ThicknessInferior,
    ThicknessFlv,
}

impl ParameterKind {
    pub const ALL: [ParameterKind; 6] = [
        ParameterKind::AverageReflectance,
        ParameterKind::LowCount,
        ParameterKind::FocalLoss,
        ParameterKind::ThicknessOverall,
        ParameterKind::ThicknessInferior,
        ParameterKind::ThicknessFlv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParameterKind::AverageReflectance => "average_reflectance",
            ParameterKind::LowCount => "low_count",
            ParameterKind::FocalLoss => "focal_loss",
            ParameterKind::ThicknessOverall => "thickness_overall",
            ParameterKind::ThicknessInferior => "thickness_inferior",
            ParameterKind::ThicknessFlv => "thickness_flv",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            ParameterKind::LowCount => Orientation::HigherIsPositive,
            _ => Orientation::LowerIsPositive,
        }
    }

    pub fn is_thickness(self) -> bool {
        matches!(self, ParameterKind::ThicknessOverall | ParameterKind::ThicknessInferior | ParameterKind::ThicknessFlv)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub cutoff_level: CutoffLevel,
    /// Trials of the 0.632+ bootstrap.
    pub n_boot: usize,
    /// Resamples for AROC and correlation comparisons.
    pub comparison_boot: usize,
    pub specificity: f64,
    pub knot_db: f64,
    pub gmm: GmmOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            cutoff_level: CutoffLevel::Five,
            n_boot: 200,
            comparison_boot: 2000,
            specificity: 0.99,
            knot_db: DEFAULT_KNOT_DB,
            gmm: GmmOptions::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_boot < 10 || self.comparison_boot < 10 {
            return Err(PipelineError::Config("bootstrap trials must be at least 10".into()));
        }
        if !(self.specificity > 0.5 && self.specificity < 1.0) {
            return Err(PipelineError::Config(format!("specificity {} outside (0.5, 1)", self.specificity)));
        }
        if !self.knot_db.is_finite() {
            return Err(PipelineError::Config("knot must be finite".into()));
        }
        if self.gmm.k == 0 || self.gmm.restarts == 0 {
            return Err(PipelineError::Config("mixture needs at least one component and restart".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Summary { n, mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub parameter: ParameterKind,
    pub normal: Option<Summary>,
    pub ppg: Option<Summary>,
    pub pg: Option<Summary>,
    /// Wilcoxon rank-sum p, normal vs PPG.
    pub p_ppg: Option<f64>,
    /// Wilcoxon rank-sum p, normal vs PG.
    pub p_pg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocRow {
    pub parameter: ParameterKind,
    pub ppg: Option<RocResult>,
    pub pg: Option<RocResult>,
    /// Paired bootstrap p against focal loss, PPG and PG.
    pub p_vs_focal_ppg: Option<f64>,
    pub p_vs_focal_pg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub parameter: ParameterKind,
    pub ppg: Option<SensitivityResult>,
    pub pg: Option<SensitivityResult>,
    /// McNemar p against focal loss, PPG and PG.
    pub mcnemar_vs_focal_ppg: Option<f64>,
    pub mcnemar_vs_focal_pg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarCell {
    pub group: Group,
    pub a: ParameterKind,
    pub b: ParameterKind,
    /// Eyes detected by `a` only.
    pub a_only: u64,
    /// Eyes detected by `b` only.
    pub b_only: u64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub parameter: ParameterKind,
    pub vf_md: Correlation,
    /// Bootstrap p for the difference from focal loss's correlation.
    pub p_vs_focal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeRecord {
    pub subject_id: String,
    pub group: Group,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vf_md: Option<f64>,
    /// Cross-validated parameters keyed by name.
    pub parameters: BTreeMap<ParameterKind, f64>,
    pub pattern: PatternClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub n_boot: usize,
    pub apparent_error: f64,
    pub oob_error: f64,
    pub no_information_error: f64,
    pub relative_overfitting: f64,
    pub weight: f64,
    pub error_632plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub config: StudyConfig,
    pub software_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub normalization_constant: f64,
    pub parameters: Vec<ParameterKind>,
    pub cross_validation: CrossValidation,
    pub eyes: Vec<EyeRecord>,
    pub group_table: Vec<GroupRow>,
    pub auroc_table: Vec<AurocRow>,
    pub auroc_comparison_method: String,
    pub sensitivity_table: Vec<SensitivityRow>,
    pub mcnemar_grid: Vec<McNemarCell>,
    pub correlation_table: Vec<CorrelationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<ClusterModel>,
    pub piecewise: BTreeMap<ParameterKind, PiecewiseFit>,
    pub patterns: BTreeMap<Group, BTreeMap<PatternClass, usize>>,
    pub warnings: Vec<String>,
}

/// Normative fit on a resample of the normals; eyes are scored with the
/// cross-validated parameter vector and called abnormal when their focal
/// loss is below the 5th percentile of the training normals.
struct NormativeEstimator<'a> {
    normals: &'a [EyeFeatures],
    diseased: &'a [EyeFeatures],
    constant: f64,
    level: CutoffLevel,
    with_thickness: bool,
}

impl NormativeEstimator<'_> {
    fn eye(&self, i: usize) -> &EyeFeatures {
        if i < self.normals.len() {
            &self.normals[i]
        } else {
            &self.diseased[i - self.normals.len()]
        }
    }

    fn params(&self, model: &NormativeModel, eye: &EyeFeatures) -> Result<Vec<f64>, StatsError> {
        let (_, p) = diagnostic_parameters(eye, model, self.level).map_err(|e| StatsError::Estimator(e.to_string()))?;
        let low = match self.level {
            CutoffLevel::Five => p.low_count_5,
            CutoffLevel::One => p.low_count_1,
        };
        let mut v = vec![p.average_reflectance, low as f64, p.focal_loss];
        if self.with_thickness {
            let missing = || StatsError::Estimator(format!("{} lacks thickness parameters", eye.subject.subject_id));
            v.push(p.thickness_overall.ok_or_else(missing)?);
            v.push(p.thickness_inferior_quadrant.ok_or_else(missing)?);
            v.push(p.thickness_flv.ok_or_else(missing)?);
        }
        Ok(v)
    }
}

impl BootstrapEstimator for NormativeEstimator<'_> {
    type Model = (NormativeModel, f64);

    fn fit(&self, normals: &[usize]) -> Result<Self::Model, StatsError> {
        let training: Vec<EyeFeatures> = normals.iter().map(|&i| self.normals[i].clone()).collect();
        let model = fit_normative(&training, self.constant, 0).map_err(|e| StatsError::Estimator(e.to_string()))?;
        let fl: Vec<f64> = training
            .iter()
            .map(|e| self.params(&model, e).map(|p| p[ParameterKind::FocalLoss.index()]))
            .collect::<Result<_, _>>()?;
        let threshold = quantile_type7(&fl, 0.05);
        Ok((model, threshold))
    }

    fn score(&self, model: &Self::Model, eye: usize) -> Result<Vec<f64>, StatsError> {
        self.params(&model.0, self.eye(eye))
    }

    fn abnormal(&self, model: &Self::Model, scores: &[f64]) -> bool {
        scores[ParameterKind::FocalLoss.index()] < model.1
    }
}

fn column(rows: &[&[f64]], k: ParameterKind) -> Vec<f64> {
    rows.iter().map(|r| r[k.index()]).collect()
}

fn detected(pos: &[f64], cutoff: f64, orientation: Orientation) -> Vec<bool> {
    pos.iter()
        .map(|&v| match orientation {
            Orientation::LowerIsPositive => v < cutoff,
            Orientation::HigherIsPositive => v > cutoff,
        })
        .collect()
}

/// Study-level evaluation of a labelled cohort: 0.632+ cross-validated
/// parameters, group comparisons, ROC analysis, sensitivity at fixed
/// specificity, correlations with visual-field MD, mixture clustering of
/// glaucoma eyes and piecewise regression.
pub fn run_study(features: &[EyeFeatures], config: &StudyConfig, seed: u64) -> Result<StudyReport, PipelineError> {
    config.validate()?;
    let config_hash = check_consistent(features)?;
    if let Some(e) = features.iter().find(|f| f.subject.group == Group::Unknown) {
        return Err(PipelineError::Config(format!("{} has no group label", e.subject.subject_id)));
    }
    let constant = cohort_normalization_constant(features)?;
    let norm: Vec<EyeFeatures> = features.iter().map(|f| f.renormalized(constant)).collect();
    let normals: Vec<EyeFeatures> = norm.iter().filter(|f| f.subject.group == Group::Normal).cloned().collect();
    let diseased: Vec<EyeFeatures> = norm.iter().filter(|f| f.subject.group != Group::Normal).cloned().collect();
    let with_thickness = norm.iter().all(|f| f.thickness_profile.is_some());
    let kinds: Vec<ParameterKind> =
        ParameterKind::ALL.into_iter().filter(|k| with_thickness || !k.is_thickness()).collect();
    let mut warnings = Vec::new();

    let estimator =
        NormativeEstimator { normals: &normals, diseased: &diseased, constant, level: config.cutoff_level, with_thickness };
    let cv = bootstrap_632plus(&estimator, normals.len(), diseased.len(), config.n_boot, derive_seed(seed, 1))?;

    // Apparent model for the per-eye loss patterns.
    let all: Vec<usize> = (0..normals.len()).collect();
    let (full, _) = estimator.fit(&all)?;
    let n_normal = normals.len();
    let eyes_ordered: Vec<&EyeFeatures> = normals.iter().chain(&diseased).collect();
    let mut eyes = Vec::with_capacity(eyes_ordered.len());
    let mut patterns: BTreeMap<Group, BTreeMap<PatternClass, usize>> = BTreeMap::new();
    for (e, est) in eyes_ordered.iter().zip(&cv.estimates) {
        let report = diagnose(e, &full, config.cutoff_level)?;
        *patterns.entry(e.subject.group).or_default().entry(report.pattern).or_default() += 1;
        eyes.push(EyeRecord {
            subject_id: e.subject.subject_id.clone(),
            group: e.subject.group,
            vf_md: e.subject.vf_md,
            parameters: kinds.iter().map(|&k| (k, est[k.index()])).collect(),
            pattern: report.pattern,
            cluster: None,
        });
    }

    let rows_of = |g: Group| -> Vec<&[f64]> {
        eyes_ordered
            .iter()
            .zip(&cv.estimates)
            .filter(|(e, _)| e.subject.group == g)
            .map(|(_, v)| v.as_slice())
            .collect()
    };
    let (rn, rppg, rpg) = (rows_of(Group::Normal), rows_of(Group::Ppg), rows_of(Group::Pg));
    let glaucoma_groups = [(Group::Ppg, &rppg), (Group::Pg, &rpg)];

    let rank_p = |a: &[f64], b: &[f64]| -> Result<Option<f64>, StatsError> {
        if a.len() < 3 || b.len() < 3 {
            return Ok(None);
        }
        Ok(Some(wilcoxon_rank_sum(a, b)?.p))
    };
    let mut group_table = Vec::new();
    for &k in &kinds {
        let (n, a, b) = (column(&rn, k), column(&rppg, k), column(&rpg, k));
        group_table.push(GroupRow {
            parameter: k,
            normal: Summary::of(&n),
            ppg: Summary::of(&a),
            pg: Summary::of(&b),
            p_ppg: rank_p(&n, &a)?,
            p_pg: rank_p(&n, &b)?,
        });
    }

    let focal = ParameterKind::FocalLoss;
    let mut auroc_table = Vec::new();
    let mut sensitivity_table = Vec::new();
    let mut mcnemar_grid = Vec::new();
    let neg_of = |k: ParameterKind| column(&rn, k);
    for &k in &kinds {
        let mut row = AurocRow { parameter: k, ppg: None, pg: None, p_vs_focal_ppg: None, p_vs_focal_pg: None };
        let mut srow =
            SensitivityRow { parameter: k, ppg: None, pg: None, mcnemar_vs_focal_ppg: None, mcnemar_vs_focal_pg: None };
        for (gi, (g, rows)) in glaucoma_groups.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let (pos, neg) = (column(rows, k), neg_of(k));
            let roc = auroc(&pos, &neg, k.orientation())?;
            let diff = if k == focal {
                None
            } else {
                let s = derive_seed(seed, 100 + 10 * k.index() as u64 + gi as u64);
                let d = auroc_difference_bootstrap(
                    &column(rows, focal),
                    &neg_of(focal),
                    focal.orientation(),
                    &pos,
                    &neg,
                    k.orientation(),
                    config.comparison_boot,
                    s,
                )?;
                Some(d.p)
            };
            let sens = sensitivity_at_specificity(&pos, &neg, config.specificity, k.orientation())?;
            if sens.unstable_quantile {
                warnings.push(format!("{}: fewer than 10 normals for the specificity cutoff", k.name()));
            }
            let mc = if k == focal {
                None
            } else {
                let fs = sensitivity_at_specificity(&column(rows, focal), &neg_of(focal), config.specificity, focal.orientation())?;
                let df = detected(&column(rows, focal), fs.cutoff, focal.orientation());
                let dk = detected(&pos, sens.cutoff, k.orientation());
                let b = df.iter().zip(&dk).filter(|(f, k)| **f && !**k).count() as u64;
                let c = df.iter().zip(&dk).filter(|(f, k)| !**f && **k).count() as u64;
                Some(mcnemar(b, c))
            };
            if *g == Group::Ppg {
                (row.ppg, row.p_vs_focal_ppg, srow.ppg, srow.mcnemar_vs_focal_ppg) = (Some(roc), diff, Some(sens), mc);
            } else {
                (row.pg, row.p_vs_focal_pg, srow.pg, srow.mcnemar_vs_focal_pg) = (Some(roc), diff, Some(sens), mc);
            }
        }
        auroc_table.push(row);
        sensitivity_table.push(srow);
    }
    for (g, rows) in glaucoma_groups {
        if rows.is_empty() {
            continue;
        }
        let calls: Vec<Vec<bool>> = kinds
            .iter()
            .map(|&k| {
                let pos = column(rows, k);
                let s = sensitivity_at_specificity(&pos, &neg_of(k), config.specificity, k.orientation())?;
                Ok(detected(&pos, s.cutoff, k.orientation()))
            })
            .collect::<Result<_, StatsError>>()?;
        for i in 0..kinds.len() {
            for j in i + 1..kinds.len() {
                let a_only = calls[i].iter().zip(&calls[j]).filter(|(a, b)| **a && !**b).count() as u64;
                let b_only = calls[i].iter().zip(&calls[j]).filter(|(a, b)| !**a && **b).count() as u64;
                mcnemar_grid.push(McNemarCell { group: g, a: kinds[i], b: kinds[j], a_only, b_only, p: mcnemar(a_only, b_only) });
            }
        }
    }

    // Correlation with VF MD over glaucoma eyes.
    let glaucoma_idx: Vec<usize> = (n_normal..eyes.len()).filter(|&i| eyes[i].vf_md.is_some()).collect();
    let mut correlation_table = Vec::new();
    if glaucoma_idx.len() >= 3 {
        let md: Vec<f64> = glaucoma_idx.iter().map(|&i| eyes[i].vf_md.expect("filtered")).collect();
        let vals = |k: ParameterKind| -> Vec<f64> { glaucoma_idx.iter().map(|&i| cv.estimates[i][k.index()]).collect() };
        for &k in &kinds {
            let y = vals(k);
            let r = match pearson(&md, &y) {
                Ok(r) => r,
                Err(StatsError::ZeroVariance) => {
                    warnings.push(format!("{}: no variance among glaucoma eyes", k.name()));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let p_vs_focal = if k == focal || glaucoma_idx.len() < 10 {
                None
            } else {
                let s = derive_seed(seed, 200 + k.index() as u64);
                Some(compare_correlations_bootstrap(&md, &vals(focal), &y, config.comparison_boot, s)?)
            };
            correlation_table.push(CorrelationRow { parameter: k, vf_md: r, p_vs_focal });
        }
    }

    // Mixture clustering of glaucoma eyes on (average, focal loss).
    let glaucoma_all: Vec<usize> = (n_normal..eyes.len()).collect();
    let clusters = if glaucoma_all.len() >= 5 * config.gmm.k {
        let pts: Vec<Vec<f64>> = glaucoma_all
            .iter()
            .map(|&i| vec![cv.estimates[i][ParameterKind::AverageReflectance.index()], cv.estimates[i][focal.index()]])
            .collect();
        let m = gmm_fit(&pts, derive_seed(seed, 3), &config.gmm)?;
        for (&i, &c) in glaucoma_all.iter().zip(&m.assignments) {
            eyes[i].cluster = Some(c);
        }
        Some(m)
    } else {
        warnings.push("too few glaucoma eyes for mixture clustering".into());
        None
    };

    // Piecewise regression against VF MD over all eyes with a field.
    let with_md: Vec<usize> = (0..eyes.len()).filter(|&i| eyes[i].vf_md.is_some()).collect();
    let x: Vec<f64> = with_md.iter().map(|&i| eyes[i].vf_md.expect("filtered")).collect();
    let mut piecewise = BTreeMap::new();
    for &k in &kinds {
        let y: Vec<f64> = with_md.iter().map(|&i| cv.estimates[i][k.index()]).collect();
        piecewise.insert(k, piecewise_two_segment(&x, &y, config.knot_db)?);
    }

    Ok(StudyReport {
        seed,
        config: config.clone(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        normalization_constant: constant,
        parameters: kinds,
        cross_validation: CrossValidation {
            n_boot: cv.n_boot,
            apparent_error: cv.apparent_error,
            oob_error: cv.oob_error,
            no_information_error: cv.no_information_error,
            relative_overfitting: cv.relative_overfitting,
            weight: cv.weight,
            error_632plus: cv.error_632plus,
        },
        eyes,
        group_table,
        auroc_table,
        auroc_comparison_method: "paired percentile bootstrap".into(),
        sensitivity_table,
        mcnemar_grid,
        correlation_table,
        clusters,
        piecewise,
        patterns,
        warnings,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl StudyReport {
    pub fn auroc_of(&self, k: ParameterKind, g: Group) -> Option<f64> {
        let row = self.auroc_table.iter().find(|r| r.parameter == k)?;
        match g {
            Group::Ppg => row.ppg.map(|r| r.auc),
            Group::Pg => row.pg.map(|r| r.auc),
            _ => None,
        }
    }

    pub fn sensitivity_of(&self, k: ParameterKind, g: Group) -> Option<f64> {
        let row = self.sensitivity_table.iter().find(|r| r.parameter == k)?;
        match g {
            Group::Ppg => row.ppg.map(|r| r.sensitivity),
            Group::Pg => row.pg.map(|r| r.sensitivity),
            _ => None,
        }
    }

    /// Group means, SDs and rank-sum p-values.
    pub fn group_csv(&self) -> String {
        let mut s = String::from("parameter,normal_mean,normal_sd,ppg_mean,ppg_sd,pg_mean,pg_sd,p_normal_ppg,p_normal_pg\n");
        for r in &self.group_table {
            let ms = |v: Option<Summary>| (fmt_opt(v.map(|x| x.mean)), fmt_opt(v.map(|x| x.sd)));
            let (nm, ns) = ms(r.normal);
            let (am, asd) = ms(r.ppg);
            let (bm, bsd) = ms(r.pg);
            let _ = writeln!(s, "{},{nm},{ns},{am},{asd},{bm},{bsd},{},{}", r.parameter.name(), fmt_opt(r.p_ppg), fmt_opt(r.p_pg));
        }
        s
    }

    /// AROC with standard errors and comparison p-values against focal loss.
    pub fn auroc_csv(&self) -> String {
        let mut s = String::from("parameter,ppg_auroc,ppg_se,p_vs_focal_ppg,pg_auroc,pg_se,p_vs_focal_pg\n");
        for r in &self.auroc_table {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.parameter.name(),
                fmt_opt(r.ppg.map(|x| x.auc)),
                fmt_opt(r.ppg.map(|x| x.se)),
                fmt_opt(r.p_vs_focal_ppg),
                fmt_opt(r.pg.map(|x| x.auc)),
                fmt_opt(r.pg.map(|x| x.se)),
                fmt_opt(r.p_vs_focal_pg)
            );
        }
        s
    }

    /// Sensitivity at the configured specificity with McNemar p-values.
    pub fn sensitivity_csv(&self) -> String {
        let mut s = String::from("parameter,ppg_sensitivity,mcnemar_vs_focal_ppg,pg_sensitivity,mcnemar_vs_focal_pg,cutoff\n");
        for r in &self.sensitivity_table {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.parameter.name(),
                fmt_opt(r.ppg.map(|x| x.sensitivity)),
                fmt_opt(r.mcnemar_vs_focal_ppg),
                fmt_opt(r.pg.map(|x| x.sensitivity)),
                fmt_opt(r.mcnemar_vs_focal_pg),
                fmt_opt(r.pg.or(r.ppg).map(|x| x.cutoff))
            );
        }
        s
    }

    /// Pearson correlation with VF MD among glaucoma eyes.
    pub fn correlation_csv(&self) -> String {
        let mut s = String::from("parameter,r,p,n,p_vs_focal\n");
        for r in &self.correlation_table {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{}",
                r.parameter.name(),
                r.vf_md.r,
                r.vf_md.p,
                r.vf_md.n,
                fmt_opt(r.p_vs_focal)
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
