//! Synthetic disc-scan phantoms with known geometry and planted defects.
//!
//! Each A-line is a stack of bands (vitreous, NFL, intermediate retina,
//! PPEC, choroid, deep tissue). The inner retinal surface is a spherical cap
//! centred on the disc plus a planar tilt produced by decentring the scan
//! pivot in the pupil. NFL intensity is
//! `base × exp(-(θ/σ)²) × defect attenuation × speckle`, with θ the local
//! radial incidence angle of the surface.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Group, Quality, ScanVolume, Sex, SubjectMeta, VolumeDims, VolumeError};
use crate::geometry::{to_polar_frame, wrap_pi, EnFaceGeometry, Laterality};
use crate::grid::Grid2;
use crate::rng::substream;
use crate::segmentation::{circle_polygon, SurfaceSet};

/// Distance from the pupil pivot to the retina used to convert a pivot
/// displacement into an image tilt, mm.
pub const PUPIL_TO_RETINA_MM: f64 = 17.0;

pub const VITREOUS_LEVEL: f64 = 0.02;
pub const NFL_LEVEL: f64 = 1.0;
pub const INTERMEDIATE_LEVEL: f64 = 0.1;
pub const PPEC_LEVEL: f64 = 2.0;
pub const CHOROID_LEVEL: f64 = 0.4;
pub const DEEP_LEVEL: f64 = 0.05;
pub const DISC_TISSUE_LEVEL: f64 = 0.3;

const VESSEL_WALL_GAIN: f64 = 1.5;
const VESSEL_SHADOW_GAIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectKind {
    Wedge,
    Diffuse,
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub kind: DefectKind,
    /// Right-eye-convention azimuth of the defect centre, degrees.
    pub center_azimuth: f64,
    /// Degrees, in `(0, 360]`.
    pub angular_width: f64,
    /// Reflectance reduction, dB (non-negative).
    pub depth: f64,
    /// Fraction of NFL thickness lost inside the defect, `[0, 1]`.
    pub thickness_loss_fraction: f64,
    /// Radial extent from the disc centre, mm. Defaults to everything outside
    /// the disc for wedge and diffuse defects and to 1.35-1.75 mm for
    /// isolated ones.
    #[serde(default)]
    pub radial_range: Option<[f64; 2]>,
}

impl DefectSpec {
    pub fn validate(&self, disc_radius: f64) -> Result<(), VolumeError> {
        if !(self.depth >= 0.0 && self.depth.is_finite()) {
            return Err(VolumeError::Spec(format!("defect depth {} must be >= 0", self.depth)));
        }
        if !(self.angular_width > 0.0 && self.angular_width <= 360.0) {
            return Err(VolumeError::Spec(format!(
                "defect width {} outside (0, 360]",
                self.angular_width
            )));
        }
        if !(0.0..=1.0).contains(&self.thickness_loss_fraction) {
            return Err(VolumeError::Spec("thickness loss fraction outside [0, 1]".into()));
        }
        let [r0, r1] = self.radial_extent(disc_radius);
        if r0 < disc_radius - 1e-12 {
            return Err(VolumeError::Spec(format!(
                "defect radial range starts at {r0} mm, inside the disc (radius {disc_radius} mm)"
            )));
        }
        if r1 <= r0 {
            return Err(VolumeError::Spec("defect radial range is empty".into()));
        }
        Ok(())
    }

    pub fn radial_extent(&self, disc_radius: f64) -> [f64; 2] {
        self.radial_range.unwrap_or(match self.kind {
            DefectKind::Wedge | DefectKind::Diffuse => [disc_radius, f64::INFINITY],
            DefectKind::Isolated => [1.35, 1.75],
        })
    }

    /// Whether a polar position (right-eye frame, azimuth in radians) lies
    /// inside the defect.
    pub fn contains(&self, r: f64, phi: f64, disc_radius: f64) -> bool {
        let [r0, r1] = self.radial_extent(disc_radius);
        if r < r0 || r >= r1 {
            return false;
        }
        if self.angular_width >= 360.0 {
            return true;
        }
        let d = wrap_pi(phi - self.center_azimuth.to_radians()).abs();
        d <= 0.5 * self.angular_width.to_radians()
    }
}

/// Parametric NFL thickness: radial `1/r^p` fall-off with superotemporal and
/// inferotemporal arcuate peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessModel {
    /// Thickness away from the arcuate peaks at `ref_radius_mm`, µm.
    pub base_um: f64,
    pub ref_radius_mm: f64,
    pub radial_exponent: f64,
    /// Relative height of the arcuate peaks.
    pub arcuate_gain: f64,
    pub superior_peak_deg: f64,
    pub inferior_peak_deg: f64,
    pub peak_width_deg: f64,
}

impl Default for ThicknessModel {
    fn default() -> Self {
        Self {
            base_um: 72.0,
            ref_radius_mm: 1.7,
            radial_exponent: 1.0,
            arcuate_gain: 0.9,
            superior_peak_deg: 70.0,
            inferior_peak_deg: 290.0,
            peak_width_deg: 28.0,
        }
    }
}

impl ThicknessModel {
    /// Thickness in mm at a polar position (right-eye frame).
    pub fn thickness_mm(&self, r: f64, phi: f64) -> f64 {
        let bump = |peak_deg: f64| {
            let d = wrap_pi(phi - peak_deg.to_radians()) / self.peak_width_deg.to_radians();
            (-0.5 * d * d).exp()
        };
        let angular = 1.0 + self.arcuate_gain * (bump(self.superior_peak_deg) + bump(self.inferior_peak_deg));
        let radial = (self.ref_radius_mm / r.max(1e-3)).powf(self.radial_exponent);
        1e-3 * self.base_um * radial * angular
    }
}

/// One term of the smooth anatomical reflectance texture, in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureMode {
    pub azimuthal_order: u32,
    /// Radial wavenumber, cycles per mm.
    pub radial_freq: f64,
    pub amplitude_db: f64,
    pub azimuthal_phase: f64,
    pub radial_phase: f64,
}

impl TextureMode {
    pub fn eval(&self, r: f64, phi: f64) -> f64 {
        self.amplitude_db
            * (self.azimuthal_order as f64 * phi + self.azimuthal_phase).cos()
            * (std::f64::consts::TAU * self.radial_freq * r + self.radial_phase).cos()
    }
}

/// Random smooth texture with the given overall standard deviation (dB).
pub fn random_texture<R: Rng>(rng: &mut R, sd_db: f64) -> Vec<TextureMode> {
    if sd_db <= 0.0 {
        return Vec::new();
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut modes = Vec::new();
    for m in 1..=16u32 {
        for rf in [0.0, 0.35, 0.7] {
            let a: f64 = normal.sample(rng) / (1.0 + m as f64 / 6.0);
            modes.push(TextureMode {
                azimuthal_order: m,
                radial_freq: rf,
                amplitude_db: a,
                azimuthal_phase: rng.random::<f64>() * std::f64::consts::TAU,
                radial_phase: rng.random::<f64>() * std::f64::consts::TAU,
            });
        }
    }
    // Each term has variance a²/2 (azimuthal) times ~1/2 (radial, for rf > 0).
    let var: f64 = modes
        .iter()
        .map(|t| t.amplitude_db.powi(2) * if t.radial_freq > 0.0 { 0.25 } else { 0.5 })
        .sum();
    let scale = sd_db / var.sqrt();
    for t in &mut modes {
        t.amplitude_db *= scale;
    }
    modes
}

/// A large retinal vessel: a band around a centreline that leaves the disc
/// at `start_azimuth_deg` and turns `bend_deg_per_mm` per mm of radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselSpec {
    pub start_azimuth_deg: f64,
    pub bend_deg_per_mm: f64,
    pub width_mm: f64,
}

pub fn default_vessels() -> Vec<VesselSpec> {
    vec![
        VesselSpec { start_azimuth_deg: 60.0, bend_deg_per_mm: -12.0, width_mm: 0.12 },
        VesselSpec { start_azimuth_deg: 300.0, bend_deg_per_mm: 12.0, width_mm: 0.12 },
        VesselSpec { start_azimuth_deg: 130.0, bend_deg_per_mm: 6.0, width_mm: 0.09 },
        VesselSpec { start_azimuth_deg: 230.0, bend_deg_per_mm: -6.0, width_mm: 0.09 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: VolumeDims,
    pub extent_mm: [f64; 2],
    /// Axial range of the volume, mm.
    pub depth_range_mm: f64,
    pub laterality: Laterality,
    pub subject: SubjectMeta,
    /// En-face mm coordinates.
    pub disc_center: [f64; 2],
    pub disc_radius: f64,
    pub nfl_thickness_model: ThicknessModel,
    /// Eye-level NFL reflectivity offset, dB.
    pub nfl_reflectivity_db: f64,
    pub texture: Vec<TextureMode>,
    /// Pivot displacement in the pupil, mm, expressed along en-face axes.
    pub beam_offset: [f64; 2],
    /// Apparent curvature of the inner retinal surface, 1/mm.
    pub retinal_curvature: f64,
    /// Width σ of the directional reflectance factor, degrees.
    pub directional_width_deg: f64,
    /// Depth of the inner retinal surface at the disc centre, mm.
    pub surface_depth_mm: f64,
    pub speckle_contrast: f64,
    pub vessels: Vec<VesselSpec>,
    pub defects: Vec<DefectSpec>,
    pub rng_seed: u64,
}

impl PhantomSpec {
    /// Flat, noise-free, defect-free right-eye phantom at the given sampling.
    pub fn flat(dims: VolumeDims) -> Self {
        Self {
            dims,
            extent_mm: [4.5, 4.5],
            depth_range_mm: 2.0,
            laterality: Laterality::Right,
            subject: SubjectMeta {
                subject_id: "phantom".into(),
                age: 50.0,
                axial_length: Some(23.6),
                sex: Sex::Unspecified,
                group: Group::Normal,
                vf_md: None,
                vf_psd: None,
            },
            disc_center: [2.25, 2.25],
            disc_radius: 0.9,
            nfl_thickness_model: ThicknessModel::default(),
            nfl_reflectivity_db: 0.0,
            texture: Vec::new(),
            beam_offset: [0.0, 0.0],
            retinal_curvature: 0.0,
            directional_width_deg: 15.0,
            surface_depth_mm: 1.0,
            speckle_contrast: 0.0,
            vessels: Vec::new(),
            defects: Vec::new(),
            rng_seed: 0,
        }
    }

    pub fn en_face(&self) -> EnFaceGeometry {
        EnFaceGeometry::new(self.dims.fast, self.dims.slow, self.extent_mm)
    }

    pub fn depth_spacing_mm(&self) -> f64 {
        self.depth_range_mm / self.dims.depth as f64
    }

    /// Tilt of the apparent retina produced by the pivot displacement, as
    /// `tan(tilt)` and the unit direction of steepest ascent.
    pub fn tilt(&self) -> (f64, [f64; 2]) {
        let m = self.beam_offset[0].hypot(self.beam_offset[1]);
        if m == 0.0 {
            return (0.0, [1.0, 0.0]);
        }
        (m / PUPIL_TO_RETINA_MM, [self.beam_offset[0] / m, self.beam_offset[1] / m])
    }

    fn cap_height(&self, r: f64) -> f64 {
        let c = self.retinal_curvature;
        if c == 0.0 {
            return 0.0;
        }
        let s = (c * r).min(0.999);
        (1.0 - (1.0 - s * s).sqrt()) / c
    }

    fn cap_slope(&self, r: f64) -> f64 {
        let c = self.retinal_curvature;
        let s = (c * r).min(0.999);
        s / (1.0 - s * s).sqrt()
    }

    /// Height of the inner retinal surface above its value at the disc
    /// centre (mm, positive = anterior) at an en-face offset from the disc.
    pub fn surface_height(&self, offset: [f64; 2]) -> f64 {
        let r = offset[0].hypot(offset[1]);
        let (t, dir) = self.tilt();
        self.cap_height(r) + t * (offset[0] * dir[0] + offset[1] * dir[1])
    }

    /// Signed radial incidence angle (degrees, centripetal positive) of the
    /// inner surface at an en-face offset.
    pub fn incidence_angle_deg(&self, offset: [f64; 2]) -> f64 {
        let r = offset[0].hypot(offset[1]);
        if r == 0.0 {
            return 0.0;
        }
        let (t, dir) = self.tilt();
        let radial = (offset[0] * dir[0] + offset[1] * dir[1]) / r;
        (self.cap_slope(r) + t * radial).atan().to_degrees()
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let d = self.dims;
        if d.depth < 2 || d.fast < 2 || d.slow < 2 {
            return Err(VolumeError::Spec("phantom dimensions must be >= 2".into()));
        }
        if !(self.disc_radius > 0.0) {
            return Err(VolumeError::Spec("disc radius must be positive".into()));
        }
        if !(self.speckle_contrast >= 0.0) {
            return Err(VolumeError::Spec("speckle contrast must be >= 0".into()));
        }
        if !(self.directional_width_deg > 0.0) {
            return Err(VolumeError::Spec("directional width must be positive".into()));
        }
        if !(self.depth_range_mm > 0.0) || self.extent_mm.iter().any(|e| !(*e > 0.0)) {
            return Err(VolumeError::Spec("extents must be positive".into()));
        }
        self.subject.validate()?;
        for d in &self.defects {
            d.validate(self.disc_radius)?;
        }
        let model = PhantomModel::new(self);
        let g = self.en_face();
        // Corners and edge midpoints bound the smooth surface geometry.
        let probes = [
            (0, 0),
            (g.nx - 1, 0),
            (0, g.ny - 1),
            (g.nx - 1, g.ny - 1),
            (g.nx / 2, 0),
            (g.nx / 2, g.ny - 1),
            (0, g.ny / 2),
            (g.nx - 1, g.ny / 2),
            (g.nx / 2, g.ny / 2),
        ];
        for (i, j) in probes {
            let c = model.column(i, j);
            if c.surfaces[0] < 0.02 || c.deep_start > self.depth_range_mm {
                return Err(VolumeError::Spec(format!(
                    "retinal geometry leaves the axial range at pixel ({i}, {j})"
                )));
            }
        }
        Ok(())
    }
}

/// Noise-free description of one A-line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnModel {
    /// `[nfl_top, nfl_bottom, ez_anterior, bruchs]`, mm.
    pub surfaces: [f64; 4],
    /// Start of the deep (post-choroid) tissue, mm.
    pub deep_start: f64,
    pub in_disc: bool,
    pub in_vessel: bool,
    /// NFL intensity before speckle.
    pub nfl_intensity: f64,
    /// Reflectance loss planted by defects, dB (<= 0).
    pub loss_db: f64,
}

impl ColumnModel {
    /// Noise-free intensity of the voxel whose centre is at depth `z`.
    pub fn intensity_at(&self, z: f64) -> f64 {
        let [top, bottom, ez, bm] = self.surfaces;
        if z < top {
            return VITREOUS_LEVEL;
        }
        if self.in_disc {
            return DISC_TISSUE_LEVEL;
        }
        let shadow = if self.in_vessel { VESSEL_SHADOW_GAIN } else { 1.0 };
        if z < bottom {
            self.nfl_intensity
        } else if z < ez {
            INTERMEDIATE_LEVEL * shadow
        } else if z < bm {
            PPEC_LEVEL * shadow
        } else if z < self.deep_start {
            CHOROID_LEVEL * shadow
        } else {
            DEEP_LEVEL * shadow
        }
    }
}

/// Closed-form phantom geometry evaluated per A-line.
pub struct PhantomModel<'a> {
    spec: &'a PhantomSpec,
    geometry: EnFaceGeometry,
}

pub const INTERMEDIATE_THICKNESS_MM: f64 = 0.18;
pub const PPEC_THICKNESS_MM: f64 = 0.07;
pub const CHOROID_THICKNESS_MM: f64 = 0.2;
const CUP_DEPTH_MM: f64 = 0.3;

impl<'a> PhantomModel<'a> {
    pub fn new(spec: &'a PhantomSpec) -> Self {
        Self { spec, geometry: spec.en_face() }
    }

    pub fn column(&self, i: usize, j: usize) -> ColumnModel {
        let s = self.spec;
        let p = self.geometry.pixel_center(i, j);
        let off = [p[0] - s.disc_center[0], p[1] - s.disc_center[1]];
        let (r, phi) = to_polar_frame(off, s.laterality);
        let top = s.surface_depth_mm - s.surface_height(off);
        if r < s.disc_radius {
            let q = r / s.disc_radius;
            let cup = top + CUP_DEPTH_MM * (1.0 - q * q);
            return ColumnModel {
                surfaces: [cup; 4],
                deep_start: cup,
                in_disc: true,
                in_vessel: false,
                nfl_intensity: 0.0,
                loss_db: 0.0,
            };
        }

        let mut loss_db = 0.0;
        let mut thickness_scale = 1.0;
        for d in &s.defects {
            if d.contains(r, phi, s.disc_radius) {
                loss_db -= d.depth;
                thickness_scale *= 1.0 - d.thickness_loss_fraction;
            }
        }
        let in_vessel = s.vessels.iter().any(|v| vessel_contains(v, r, phi, s.disc_radius));

        let nfl = s.nfl_thickness_model.thickness_mm(r, phi) * thickness_scale;
        let bottom = top + nfl;
        let ez = bottom + INTERMEDIATE_THICKNESS_MM;
        let bm = ez + PPEC_THICKNESS_MM;

        let theta = s.incidence_angle_deg(off);
        let directional = (-(theta / s.directional_width_deg).powi(2)).exp();
        let texture: f64 = s.texture.iter().map(|t| t.eval(r, phi)).sum();
        let reflect_db = s.nfl_reflectivity_db + texture + loss_db;
        let mut nfl_intensity = NFL_LEVEL * directional * 10f64.powf(reflect_db / 10.0);
        if in_vessel {
            nfl_intensity *= VESSEL_WALL_GAIN;
        }
        ColumnModel {
            surfaces: [top, bottom, ez, bm],
            deep_start: bm + CHOROID_THICKNESS_MM,
            in_disc: false,
            in_vessel,
            nfl_intensity,
            loss_db,
        }
    }
}

fn vessel_contains(v: &VesselSpec, r: f64, phi: f64, disc_radius: f64) -> bool {
    if r < disc_radius {
        return false;
    }
    let centre = (v.start_azimuth_deg + v.bend_deg_per_mm * (r - disc_radius)).to_radians();
    let taper = (1.0 - 0.15 * (r - disc_radius)).max(0.5);
    wrap_pi(phi - centre).abs() * r <= 0.5 * v.width_mm * taper
}

/// Planted reflectance-loss field on the en-face grid (dB, 0 outside
/// defects and inside the disc).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub loss_db: Grid2<f64>,
    pub defects: Vec<DefectSpec>,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub volume: ScanVolume,
    pub surfaces: SurfaceSet,
    pub ground_truth: GroundTruth,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom, VolumeError> {
    spec.validate()?;
    let g = spec.en_face();
    let model = PhantomModel::new(spec);
    let n = spec.dims.depth;
    let dz = spec.depth_spacing_mm();

    let columns: Vec<ColumnModel> = (0..g.ny)
        .into_par_iter()
        .flat_map_iter(|j| (0..g.nx).map(move |i| (i, j)))
        .map(|(i, j)| model.column(i, j))
        .collect();

    let gamma = if spec.speckle_contrast > 0.0 {
        let k = 1.0 / (spec.speckle_contrast * spec.speckle_contrast);
        Some(Gamma::new(k, 1.0 / k).map_err(|e| VolumeError::Spec(e.to_string()))?)
    } else {
        None
    };

    let mut data = vec![0.0f32; spec.dims.voxel_count()];
    data.par_chunks_mut(n * g.nx).enumerate().for_each(|(j, row)| {
        let mut rng = substream(spec.rng_seed, j as u64);
        for (i, line) in row.chunks_mut(n).enumerate() {
            let col = &columns[j * g.nx + i];
            for (k, v) in line.iter_mut().enumerate() {
                let base = col.intensity_at((k as f64 + 0.5) * dz);
                let speckle = gamma.as_ref().map_or(1.0, |d| d.sample(&mut rng));
                *v = (base * speckle) as f32;
            }
        }
    });

    let mut qrng = substream(spec.rng_seed, u64::MAX);
    let quality = Quality {
        ssi: (55.0 + 25.0 * qrng.random::<f64>()).round(),
        quality_index: (6.0 + 3.0 * qrng.random::<f64>()).round(),
    };
    let volume = ScanVolume::new(
        spec.dims,
        dz,
        spec.extent_mm,
        spec.laterality,
        spec.subject.clone(),
        quality,
        data,
    )?;

    let grid_of = |f: &dyn Fn(&ColumnModel) -> f64| {
        Grid2::from_vec(g.nx, g.ny, columns.iter().map(f).collect()).expect("shape")
    };
    let surfaces = SurfaceSet {
        geometry: g,
        nfl_top: grid_of(&|c| c.surfaces[0]),
        nfl_bottom: grid_of(&|c| c.surfaces[1]),
        ez_anterior: grid_of(&|c| c.surfaces[2]),
        bruchs: grid_of(&|c| c.surfaces[3]),
        disc_polygon: disc_outline(spec),
        vessel_mask: Grid2::from_vec(g.nx, g.ny, columns.iter().map(|c| c.in_vessel).collect())
            .expect("shape"),
    };
    let ground_truth = GroundTruth { loss_db: grid_of(&|c| c.loss_db), defects: spec.defects.clone() };
    Ok(Phantom { spec: spec.clone(), volume, surfaces, ground_truth })
}

fn disc_outline(spec: &PhantomSpec) -> Vec<[f64; 2]> {
    circle_polygon(spec.disc_center, spec.disc_radius, 96)
}

/// Ranges from which cohort covariates are drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRanges {
    pub age: [f64; 2],
    pub axial_length: [f64; 2],
}

impl Default for CovariateRanges {
    fn default() -> Self {
        Self { age: [40.0, 80.0], axial_length: [22.0, 26.0] }
    }
}

/// Covariate effects planted into the eye-level NFL reflectivity, dB per
/// unit, centred at age 50 and axial length 23.6 mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffects {
    pub age_db_per_year: f64,
    pub axial_db_per_mm: f64,
    pub interaction_db: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        Self { age_db_per_year: -0.02, axial_db_per_mm: -0.3, interaction_db: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub dims: VolumeDims,
    pub extent_mm: [f64; 2],
    pub depth_range_mm: f64,
    pub covariates: CovariateRanges,
    pub effects: PlantedEffects,
    pub speckle_contrast: f64,
    pub vessels: bool,
    /// Between-eye SD of the NFL reflectivity offset, dB.
    pub eye_offset_sd_db: f64,
    /// SD of the per-eye anatomical texture, dB.
    pub texture_sd_db: f64,
    /// Range of the pivot displacement magnitude, mm.
    pub beam_offset_mm: [f64; 2],
    /// Range of the apparent retinal curvature, 1/mm.
    pub curvature: [f64; 2],
    /// Fraction of left eyes.
    pub left_eye_fraction: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            dims: VolumeDims::new(640, 400, 400),
            extent_mm: [4.5, 4.5],
            depth_range_mm: 2.0,
            covariates: CovariateRanges::default(),
            effects: PlantedEffects::default(),
            speckle_contrast: 0.3,
            vessels: true,
            eye_offset_sd_db: 0.4,
            texture_sd_db: 1.2,
            beam_offset_mm: [0.2, 2.2],
            curvature: [0.03, 0.08],
            left_eye_fraction: 0.5,
        }
    }
}

impl CohortConfig {
    /// Reduced sampling for fast studies: 200 depth samples, 160x160 A-lines.
    pub fn study_resolution() -> Self {
        Self { dims: VolumeDims::new(200, 160, 160), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let ranges = [
            ("age", self.covariates.age),
            ("axial length", self.covariates.axial_length),
            ("beam offset", self.beam_offset_mm),
            ("curvature", self.curvature),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(VolumeError::Spec(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        if !(0.0..=1.0).contains(&self.left_eye_fraction) {
            return Err(VolumeError::Spec("left-eye fraction outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Reference axial length used to centre the planted effects, mm.
pub const PLANTED_AXIAL_REF_MM: f64 = 23.6;

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn arcuate_azimuth<R: Rng>(rng: &mut R, spread: f64) -> f64 {
    let base = if rng.random::<bool>() { 290.0 } else { 70.0 };
    (base + spread * (2.0 * rng.random::<f64>() - 1.0)).rem_euclid(360.0)
}

fn plan_defects<R: Rng>(rng: &mut R, group: Group) -> Vec<DefectSpec> {
    match group {
        Group::Normal | Group::Unknown => Vec::new(),
        Group::Ppg => {
            let depth = uniform(rng, [1.5, 4.0]);
            let u: f64 = rng.random();
            let (kind, width) = if u < 0.45 {
                (DefectKind::Wedge, uniform(rng, [20.0, 40.0]))
            } else if u < 0.75 {
                (DefectKind::Diffuse, uniform(rng, [100.0, 180.0]))
            } else {
                (DefectKind::Isolated, uniform(rng, [15.0, 25.0]))
            };
            vec![DefectSpec {
                kind,
                center_azimuth: arcuate_azimuth(rng, 30.0),
                angular_width: width,
                depth,
                thickness_loss_fraction: 0.1 * depth / 4.0,
                radial_range: None,
            }]
        }
        Group::Pg => {
            let n = if rng.random::<f64>() < 0.3 { 2 } else { 1 };
            (0..n)
                .map(|_| {
                    let depth = uniform(rng, [3.0, 8.0]);
                    let (kind, width) = if rng.random::<f64>() < 0.35 {
                        (DefectKind::Wedge, uniform(rng, [25.0, 50.0]))
                    } else {
                        (DefectKind::Diffuse, uniform(rng, [120.0, 220.0]))
                    };
                    DefectSpec {
                        kind,
                        center_azimuth: arcuate_azimuth(rng, 30.0),
                        angular_width: width,
                        depth,
                        thickness_loss_fraction: 0.3 * depth / 8.0,
                        radial_range: None,
                    }
                })
                .collect()
        }
    }
}

/// Visual-field indices loosely tied to the planted damage, with a floor
/// effect for severe loss.
fn plan_visual_field<R: Rng>(rng: &mut R, group: Group, defects: &[DefectSpec]) -> (f64, f64) {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z: f64 = normal.sample(rng);
    let damage: f64 = defects.iter().map(|d| d.depth * d.angular_width / 360.0).sum();
    match group {
        Group::Normal | Group::Unknown => (0.2 + 1.0 * z, 1.45 + 0.3 * normal.sample(rng).abs()),
        Group::Ppg => (-0.5 - 0.3 * damage + 1.2 * z, 1.8 + 0.5 * normal.sample(rng).abs()),
        Group::Pg => {
            let md = -1.0 - 6.0 * damage + 1.5 * z;
            (md.max(-25.0), 2.0 + 0.8 * damage + 1.5 * normal.sample(rng).abs())
        }
    }
}

/// Phantom specifications for a cohort. Eye `k` (normals first, then PPG,
/// then PG) draws everything from its own substream of `seed`, so any eye
/// can be regenerated without the others.
pub fn plan_cohort(
    n_normal: usize,
    n_ppg: usize,
    n_pg: usize,
    config: &CohortConfig,
    seed: u64,
) -> Result<Vec<PhantomSpec>, VolumeError> {
    config.validate()?;
    let groups = std::iter::repeat_n(Group::Normal, n_normal)
        .chain(std::iter::repeat_n(Group::Ppg, n_ppg))
        .chain(std::iter::repeat_n(Group::Pg, n_pg));
    groups.enumerate().map(|(k, group)| plan_eye(k, group, config, seed)).collect()
}

/// Specification of cohort eye `index` belonging to `group`.
pub fn plan_eye(
    index: usize,
    group: Group,
    config: &CohortConfig,
    seed: u64,
) -> Result<PhantomSpec, VolumeError> {
    let mut rng = substream(seed, index as u64);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let age = uniform(&mut rng, config.covariates.age);
    let axial = uniform(&mut rng, config.covariates.axial_length);
    let sex = if rng.random::<bool>() { Sex::Male } else { Sex::Female };
    let laterality =
        if rng.random::<f64>() < config.left_eye_fraction { Laterality::Left } else { Laterality::Right };

    let e = &config.effects;
    let covariate_db = e.age_db_per_year * (age - 50.0)
        + e.axial_db_per_mm * (axial - PLANTED_AXIAL_REF_MM)
        + e.interaction_db * (age - 50.0) * (axial - PLANTED_AXIAL_REF_MM);
    let offset_db = covariate_db + config.eye_offset_sd_db * normal.sample(&mut rng);
    let texture = random_texture(&mut rng, config.texture_sd_db);

    let mut thickness = ThicknessModel::default();
    thickness.base_um *= 1.0 + 0.1 * normal.sample(&mut rng);
    thickness.superior_peak_deg += 6.0 * normal.sample(&mut rng);
    thickness.inferior_peak_deg += 6.0 * normal.sample(&mut rng);

    let offset_mag = uniform(&mut rng, config.beam_offset_mm);
    let offset_dir = rng.random::<f64>() * std::f64::consts::TAU;
    let curvature = uniform(&mut rng, config.curvature);
    let center_jitter = [0.08 * normal.sample(&mut rng), 0.08 * normal.sample(&mut rng)];
    let disc_radius = 0.85 + 0.1 * rng.random::<f64>();

    let defects = plan_defects(&mut rng, group);
    let (vf_md, vf_psd) = plan_visual_field(&mut rng, group, &defects);
    let rng_seed = rng.random::<u64>();

    let spec = PhantomSpec {
        dims: config.dims,
        extent_mm: config.extent_mm,
        depth_range_mm: config.depth_range_mm,
        laterality,
        subject: SubjectMeta {
            subject_id: format!("{}{:03}", group.label(), index),
            age,
            axial_length: Some(axial),
            sex,
            group,
            vf_md: Some(vf_md),
            vf_psd: Some(vf_psd),
        },
        disc_center: [
            0.5 * config.extent_mm[0] + center_jitter[0],
            0.5 * config.extent_mm[1] + center_jitter[1],
        ],
        disc_radius,
        nfl_thickness_model: thickness,
        nfl_reflectivity_db: offset_db,
        texture,
        beam_offset: [offset_mag * offset_dir.cos(), offset_mag * offset_dir.sin()],
        retinal_curvature: curvature,
        directional_width_deg: 15.0,
        surface_depth_mm: 0.5 * config.depth_range_mm,
        speckle_contrast: config.speckle_contrast,
        vessels: if config.vessels { default_vessels() } else { Vec::new() },
        defects,
        rng_seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Same eye imaged again: new pivot displacement and speckle, identical
/// anatomy.
pub fn rescan(spec: &PhantomSpec, config: &CohortConfig, seed: u64) -> PhantomSpec {
    let mut rng = substream(seed, 0x7265_7363);
    let mag = uniform(&mut rng, config.beam_offset_mm);
    let dir = rng.random::<f64>() * std::f64::consts::TAU;
    PhantomSpec {
        beam_offset: [mag * dir.cos(), mag * dir.sin()],
        rng_seed: rng.random(),
        ..spec.clone()
    }
}

pub fn generate_cohort(
    n_normal: usize,
    n_ppg: usize,
    n_pg: usize,
    config: &CohortConfig,
    seed: u64,
) -> Result<Vec<Phantom>, VolumeError> {
    plan_cohort(n_normal, n_ppg, n_pg, config, seed)?.iter().map(generate_phantom).collect()
}
