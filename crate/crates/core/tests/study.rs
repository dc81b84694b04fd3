use nflr_core::geometry::Laterality;
use nflr_core::pipeline::{run_study, ParameterKind, PipelineError, StudyConfig};
use nflr_core::rng::substream;
use nflr_core::superpixel::EyeFeatures;
use nflr_core::volume::{Group, Sex, SubjectMeta};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Feature vectors with an eye-level offset, independent cell noise and, for
/// glaucoma eyes, a block of lost cells and a thinner inferior profile.
fn cohort(n_normal: usize, n_ppg: usize, n_pg: usize, seed: u64) -> Vec<EyeFeatures> {
    let z = Normal::new(0.0, 1.0).unwrap();
    let groups = std::iter::repeat_n(Group::Normal, n_normal)
        .chain(std::iter::repeat_n(Group::Ppg, n_ppg))
        .chain(std::iter::repeat_n(Group::Pg, n_pg));
    groups
        .enumerate()
        .map(|(k, group)| {
            let mut rng = substream(seed, k as u64);
            let age = rng.random_range(40.0..80.0);
            let ax = rng.random_range(22.0..26.0);
            let (depth, width) = match group {
                Group::Ppg => (rng.random_range(1.0..3.0), rng.random_range(4..10)),
                Group::Pg => (rng.random_range(3.0..8.0), rng.random_range(6..24)),
                _ => (0.0, 0),
            };
            let start = rng.random_range(0..32);
            let offset = 0.4 * z.sample(&mut rng) - 0.02 * (age - 50.0) - 0.3 * (ax - 23.6);
            let values: Vec<f64> = (0..160)
                .map(|i| {
                    let t = i / 5;
                    let lost = (t + 32 - start) % 32 < width;
                    offset + z.sample(&mut rng) - if lost { depth } else { 0.0 }
                })
                .collect();
            let thin = depth * 2.0 * width as f64 / 32.0;
            let profile: Vec<f64> = (0..256)
                .map(|a| {
                    let phi = a as f64 / 256.0 * std::f64::consts::TAU;
                    100.0 + 30.0 * (2.0 * phi).cos().abs() - thin + 3.0 * z.sample(&mut rng)
                })
                .collect();
            let md = match group {
                Group::Normal => 0.5 * z.sample(&mut rng),
                _ => -(depth * width as f64 / 4.0) + z.sample(&mut rng),
            };
            let subject = SubjectMeta {
                subject_id: format!("{}{k:03}", group.label()),
                age,
                axial_length: Some(ax),
                sex: if k % 2 == 0 { Sex::Male } else { Sex::Female },
                group,
                vf_md: Some(md),
                vf_psd: None,
            };
            let mut f = EyeFeatures::new(subject, Laterality::Right, values).unwrap();
            f.thickness_profile = Some(profile);
            f.annulus_mean_db = Some(offset);
            f.config_hash = Some("abc".into());
            f
        })
        .collect()
}

fn quick() -> StudyConfig {
    StudyConfig { n_boot: 60, comparison_boot: 300, ..StudyConfig::default() }
}

#[test]
fn same_seed_same_report() {
    let eyes = cohort(30, 15, 20, 1);
    let a = run_study(&eyes, &quick(), 9).unwrap();
    let b = run_study(&eyes, &quick(), 9).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.auroc_csv(), b.auroc_csv());
    let c = run_study(&eyes, &quick(), 10).unwrap();
    assert_ne!(a.to_json(), c.to_json());
}

#[test]
fn report_contents() {
    let eyes = cohort(30, 15, 20, 2);
    let r = run_study(&eyes, &quick(), 3).unwrap();
    assert_eq!(r.eyes.len(), 65);
    assert_eq!(r.parameters.len(), 6);
    assert_eq!(r.group_table.len(), 6);
    let fl = r.auroc_of(ParameterKind::FocalLoss, Group::Pg).unwrap();
    assert!(fl > 0.9, "{fl}");
    assert!(r.sensitivity_of(ParameterKind::FocalLoss, Group::Pg).unwrap() > 0.5);
    let glaucoma_clustered = r.eyes.iter().filter(|e| e.cluster.is_some()).count();
    assert_eq!(glaucoma_clustered, 35);
    assert!(r.eyes.iter().filter(|e| e.group == Group::Normal).all(|e| e.cluster.is_none()));
    let total: usize = r.patterns.values().flat_map(|m| m.values()).sum();
    assert_eq!(total, 65);
    assert!((0.632..=1.0).contains(&r.cross_validation.weight));
    assert_eq!(r.auroc_comparison_method, "paired percentile bootstrap");
    // Every CSV table has a header plus one line per parameter.
    for table in [r.group_csv(), r.auroc_csv(), r.sensitivity_csv(), r.correlation_csv()] {
        assert_eq!(table.lines().count(), 7, "{table}");
    }
    // The three reflectance parameters separate PG eyes better than chance.
    for k in [ParameterKind::AverageReflectance, ParameterKind::LowCount, ParameterKind::FocalLoss] {
        assert!(r.auroc_of(k, Group::Pg).unwrap() > 0.7);
    }
}

#[test]
fn shuffled_labels_give_chance_auroc() {
    let mut eyes = cohort(35, 30, 35, 4);
    let mut labels: Vec<Group> = eyes.iter().map(|e| e.subject.group).collect();
    labels.shuffle(&mut substream(5, 0));
    for (e, g) in eyes.iter_mut().zip(labels) {
        e.subject.group = g;
    }
    let r = run_study(&eyes, &quick(), 6).unwrap();
    let aucs: Vec<f64> = r
        .parameters
        .iter()
        .flat_map(|&k| [r.auroc_of(k, Group::Ppg).unwrap(), r.auroc_of(k, Group::Pg).unwrap()])
        .collect();
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() < 0.1, "{aucs:?}");
    assert!(aucs.iter().all(|a| (a - 0.5).abs() < 0.2), "{aucs:?}");
}

#[test]
fn study_preconditions() {
    let eyes = cohort(15, 5, 5, 7);
    assert!(run_study(&eyes, &quick(), 1).is_err());
    let mut eyes = cohort(25, 5, 5, 7);
    eyes[30].config_hash = Some("other".into());
    assert!(matches!(run_study(&eyes, &quick(), 1), Err(PipelineError::MixedConfig(..))));
    let bad = StudyConfig { specificity: 1.5, ..quick() };
    assert!(matches!(run_study(&cohort(25, 5, 5, 7), &bad, 1), Err(PipelineError::Config(_))));
}
