use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use nflr_core::normative::{CutoffLevel, NormativeModel};
use nflr_core::pipeline::{
    diagnose, fit_cohort_model, process_volume_as, run_study, PipelineError, ProcessConfig, StudyConfig,
};
use nflr_core::reflectance::{write_polar_csv, write_polar_pgm};
use nflr_core::stats::GmmOptions;
use nflr_core::superpixel::EyeFeatures;
use nflr_core::volume::phantom::{generate_phantom, plan_cohort, plan_eye, CohortConfig, DefectKind, DefectSpec};
use nflr_core::volume::{load_volume, save_volume, Group, VolumeError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "nflr", version, about = "Nerve fiber layer reflectance analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one synthetic volume.
    Phantom(PhantomArgs),
    /// Generate a labelled synthetic cohort with a manifest.
    Cohort(CohortArgs),
    /// Turn volumes into superpixel feature files.
    Process(ProcessArgs),
    /// Fit a normative model on normal-eye features.
    Fit(FitArgs),
    /// Diagnose eyes against a normative model.
    Diagnose(DiagnoseArgs),
    /// Run the study-level evaluation on a labelled cohort.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Resolution {
    /// 200 × 160 × 160 voxels.
    Study,
    /// 640 × 400 × 400 voxels.
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupArg {
    Normal,
    Ppg,
    Pg,
}

impl From<GroupArg> for Group {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Normal => Group::Normal,
            GroupArg::Ppg => Group::Ppg,
            GroupArg::Pg => Group::Pg,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DefectArg {
    Wedge,
    Diffuse,
    Isolated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    #[value(name = "5")]
    Five,
    #[value(name = "1")]
    One,
}

impl From<LevelArg> for CutoffLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Five => CutoffLevel::Five,
            LevelArg::One => CutoffLevel::One,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "study")]
    resolution: Resolution,
    /// Disable the simulated retinal vessels.
    #[arg(long)]
    no_vessels: bool,
}

impl SynthArgs {
    fn config(&self) -> CohortConfig {
        let mut c = match self.resolution {
            Resolution::Study => CohortConfig::study_resolution(),
            Resolution::Full => CohortConfig::default(),
        };
        c.vessels = !self.no_vessels;
        c
    }
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[command(flatten)]
    synth: SynthArgs,
    /// Header path; the body is written next to it with a `.raw` suffix.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "normal")]
    group: GroupArg,
    /// Replace the planned defects with one planted defect.
    #[arg(long, value_enum)]
    defect: Option<DefectArg>,
    /// Defect centre azimuth, degrees in the right-eye frame.
    #[arg(long, default_value_t = 270.0)]
    azimuth: f64,
    /// Defect angular width, degrees.
    #[arg(long, default_value_t = 30.0)]
    width: f64,
    /// Defect reflectance loss, dB.
    #[arg(long, default_value_t = 6.0)]
    depth: f64,
}

#[derive(Debug, Args)]
struct CohortArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 35)]
    normal: usize,
    #[arg(long, default_value_t = 30)]
    ppg: usize,
    #[arg(long, default_value_t = 35)]
    pg: usize,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Highest azimuthal order passed.
    #[arg(long)]
    k_az: Option<usize>,
    /// Radial cut-off, cycles across the polar raster.
    #[arg(long)]
    k_rad: Option<f64>,
    /// Disable radial smoothing.
    #[arg(long)]
    no_radial: bool,
    #[arg(long)]
    azimuth_bins: Option<usize>,
    #[arg(long)]
    radius_bins: Option<usize>,
    /// Thickness profile samples on the 3.4 mm circle.
    #[arg(long)]
    thickness_samples: Option<usize>,
}

impl FilterArgs {
    fn config(&self) -> std::result::Result<ProcessConfig, PipelineError> {
        let mut c = ProcessConfig::default();
        if let Some(k) = self.k_az {
            c.filter.k_az = k;
        }
        if let Some(k) = self.k_rad {
            c.filter.k_rad = Some(k);
        }
        if self.no_radial {
            c.filter.k_rad = None;
        }
        if let Some(n) = self.azimuth_bins {
            c.polar.azimuth_bins = n;
        }
        if let Some(n) = self.radius_bins {
            c.polar.radius_bins = n;
        }
        if let Some(n) = self.thickness_samples {
            c.thickness_samples = n;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct ProcessArgs {
    /// Volume header files.
    #[arg(required = true)]
    volumes: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
    /// Normalization constant (linear); defaults to 1.
    #[arg(long, conflicts_with = "model")]
    norm_const: Option<f64>,
    /// Take the normalization constant from a normative model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also write polar maps as CSV and PGM.
    #[arg(long)]
    export_maps: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Feature files or directories of them.
    #[arg(required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "5")]
    level: LevelArg,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "5")]
    level: LevelArg,
    /// 0.632+ bootstrap trials.
    #[arg(long, default_value_t = 200)]
    n_boot: usize,
    /// Resamples for AROC and correlation comparisons.
    #[arg(long, default_value_t = 2000)]
    comparison_boot: usize,
    #[arg(long, default_value_t = 0.99)]
    specificity: f64,
    /// VF MD split of the piecewise regression, dB.
    #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
    knot: f64,
    /// Mixture components.
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Json(PathBuf, serde_json::Error),
    Pipeline(PipelineError),
    /// Some eyes failed; the worst exit code among them.
    Partial(u8),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

impl From<VolumeError> for CliError {
    fn from(e: VolumeError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(..) | CliError::Json(..) => EXIT_DATA,
            CliError::Pipeline(e) => e.exit_code() as u8,
            CliError::Partial(c) => *c,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Json(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Pipeline(e) => write!(f, "{e}"),
            CliError::Partial(_) => write!(f, "some inputs failed"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Json(path.to_path_buf(), e))?;
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json(path.to_path_buf(), e))
}

/// Feature files named on the command line, with directories expanded to
/// their `*.features.json` entries; sorted for a stable order.
fn feature_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| CliError::Io(p.clone(), e))?;
            for e in entries {
                let path = e.map_err(|e| CliError::Io(p.clone(), e))?.path();
                if path.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".features.json")) {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn load_features(inputs: &[PathBuf]) -> Result<Vec<EyeFeatures>> {
    let paths = feature_paths(inputs)?;
    if paths.is_empty() {
        return Err(CliError::Usage("no feature files given".into()));
    }
    paths
        .iter()
        .map(|p| {
            let f: EyeFeatures = read_json(p)?;
            f.validate().map_err(|e| CliError::Pipeline(e.into()))?;
            Ok(f)
        })
        .collect()
}

fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    let cfg = a.synth.config();
    let mut spec = plan_eye(0, a.group.into(), &cfg, a.synth.seed)?;
    if let Some(kind) = a.defect {
        let kind = match kind {
            DefectArg::Wedge => DefectKind::Wedge,
            DefectArg::Diffuse => DefectKind::Diffuse,
            DefectArg::Isolated => DefectKind::Isolated,
        };
        spec.defects = vec![DefectSpec {
            kind,
            center_azimuth: a.azimuth,
            angular_width: a.width,
            depth: a.depth,
            thickness_loss_fraction: 0.0,
            radial_range: None,
        }];
        spec.validate()?;
    }
    let phantom = generate_phantom(&spec)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_volume(&phantom.volume, &a.out)?;
    let mut spec_path = a.out.clone().into_os_string();
    spec_path.push(".spec.json");
    write_json(Path::new(&spec_path), &phantom.spec)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn cmd_cohort(a: &CohortArgs) -> Result<()> {
    let cfg = a.synth.config();
    let specs = plan_cohort(a.normal, a.ppg, a.pg, &cfg, a.synth.seed)?;
    create_dir(&a.out)?;
    let files: Vec<String> = specs
        .par_iter()
        .map(|spec| {
            let phantom = generate_phantom(spec)?;
            let name = format!("{}.json", spec.subject.subject_id);
            save_volume(&phantom.volume, &a.out.join(&name))?;
            Ok(name)
        })
        .collect::<Result<_>>()?;
    let mut manifest = String::from("subject_id,group,laterality,age,axial_length,sex,vf_md,vf_psd,volume\n");
    for (spec, file) in specs.iter().zip(&files) {
        let s = &spec.subject;
        manifest.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.subject_id,
            s.group.label(),
            serde_json::to_value(spec.laterality).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            s.age,
            opt(s.axial_length),
            serde_json::to_value(s.sex).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            opt(s.vf_md),
            opt(s.vf_psd),
            file
        ));
    }
    write_text(&a.out.join("manifest.csv"), &manifest)
}

fn cmd_process(a: &ProcessArgs) -> Result<()> {
    let cfg = a.filter.config()?;
    let constant = match (&a.model, a.norm_const) {
        (Some(m), _) => read_json::<NormativeModel>(m)?.normalization_constant,
        (None, Some(c)) if c > 0.0 && c.is_finite() => c,
        (None, Some(c)) => return Err(CliError::Usage(format!("normalization constant {c} must be positive"))),
        (None, None) => 1.0,
    };
    let grid = cfg.grid()?;
    create_dir(&a.out)?;
    let results: Vec<Result<()>> = a
        .volumes
        .par_iter()
        .map(|path| {
            let volume = load_volume(path)?;
            let eye = process_volume_as::<f64>(&volume, &grid, &cfg, constant)?;
            let id = &eye.features.subject.subject_id;
            write_json(&a.out.join(format!("{id}.features.json")), &eye.features)?;
            if a.export_maps {
                for (tag, map) in [("polar", &eye.polar), ("filtered", &eye.filtered)] {
                    let csv = a.out.join(format!("{id}.{tag}.csv"));
                    let f = fs::File::create(&csv).map_err(|e| CliError::Io(csv.clone(), e))?;
                    write_polar_csv(map, BufWriter::new(f)).map_err(|e| CliError::Io(csv.clone(), e))?;
                    let pgm = a.out.join(format!("{id}.{tag}.pgm"));
                    let f = fs::File::create(&pgm).map_err(|e| CliError::Io(pgm.clone(), e))?;
                    write_polar_pgm(map, BufWriter::new(f)).map_err(|e| CliError::Io(pgm.clone(), e))?;
                }
            }
            Ok(())
        })
        .collect();
    let mut worst = 0u8;
    for (path, r) in a.volumes.iter().zip(results) {
        if let Err(e) = r {
            eprintln!("error: {}: {e}", path.display());
            worst = worst.max(e.code());
        }
    }
    if worst > 0 {
        return Err(CliError::Partial(worst));
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let features = load_features(&a.features)?;
    let normals: Vec<EyeFeatures> = features.into_iter().filter(|f| f.subject.group == Group::Normal).collect();
    let model = fit_cohort_model(&normals, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(&a.out, &model)
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let model: NormativeModel = read_json(&a.model)?;
    let features = load_features(&a.features)?;
    create_dir(&a.out)?;
    for f in &features {
        let report = diagnose(f, &model, a.level.into())?;
        write_json(&a.out.join(format!("{}.report.json", report.subject_id)), &report)?;
        write_text(&a.out.join(format!("{}.significance.csv", report.subject_id)), &report.significance_csv())?;
    }
    Ok(())
}

fn cmd_study(a: &StudyArgs) -> Result<()> {
    let features = load_features(&a.features)?;
    let config = StudyConfig {
        cutoff_level: a.level.into(),
        n_boot: a.n_boot,
        comparison_boot: a.comparison_boot,
        specificity: a.specificity,
        knot_db: a.knot,
        gmm: GmmOptions { k: a.clusters, restarts: a.restarts, ..GmmOptions::default() },
    };
    let report = run_study(&features, &config, a.seed)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("study.json"), &(report.to_json() + "\n"))?;
    write_text(&a.out.join("groups.csv"), &report.group_csv())?;
    write_text(&a.out.join("auroc.csv"), &report.auroc_csv())?;
    write_text(&a.out.join("sensitivity.csv"), &report.sensitivity_csv())?;
    write_text(&a.out.join("correlation.csv"), &report.correlation_csv())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("NFLR_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("NFLR_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Cohort(a) => cmd_cohort(a),
        Command::Process(a) => cmd_process(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Study(a) => cmd_study(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Partial(code)) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
