use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ReflectanceError;
use crate::geometry::{from_polar_frame, Laterality};
use crate::segmentation::{point_in_polygon, SurfaceSet};

/// Incidence angle of the beam on the inner retinal surface around a circle
/// centred on the disc. 0° is perpendicular; positive angles are
/// centripetal (the surface rises anteriorly away from the disc).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceProfile {
    /// Right-eye-convention azimuth of each sample, degrees.
    pub azimuth_deg: Vec<f64>,
    pub angle_deg: Vec<f64>,
    pub diameter_mm: f64,
}

/// Finite-difference half-step along the radius, mm.
pub const INCIDENCE_STEP_MM: f64 = 0.2;

pub fn incidence_angle_profile(
    surfaces: &SurfaceSet,
    laterality: Laterality,
    disc_center: [f64; 2],
    diameter_mm: f64,
    samples: usize,
) -> Result<IncidenceProfile, ReflectanceError> {
    let g = surfaces.geometry;
    let r = 0.5 * diameter_mm;
    let h = INCIDENCE_STEP_MM;
    if samples < 3 || !(r > h) {
        return Err(ReflectanceError::Precondition("incidence circle too small".into()));
    }
    let depth_at = |rad: f64, phi: f64| -> Result<f64, ReflectanceError> {
        let off = from_polar_frame(rad, phi, laterality);
        let p = [disc_center[0] + off[0], disc_center[1] + off[1]];
        if point_in_polygon(p, &surfaces.disc_polygon) {
            return Err(ReflectanceError::DiscIntersection);
        }
        let f = g.to_index(p);
        surfaces
            .nfl_top
            .bilinear(f[0], f[1])
            .ok_or_else(|| ReflectanceError::Precondition(format!("incidence circle leaves the scan at {p:?}")))
    };
    let mut azimuth_deg = Vec::with_capacity(samples);
    let mut angle_deg = Vec::with_capacity(samples);
    for a in 0..samples {
        let phi = std::f64::consts::TAU * a as f64 / samples as f64;
        let inner = depth_at(r - h, phi)?;
        let outer = depth_at(r + h, phi)?;
        // Depth grows posteriorly, so a surface that rises away from the
        // disc has a negative depth slope.
        let slope = -(outer - inner) / (2.0 * h);
        azimuth_deg.push(phi.to_degrees());
        angle_deg.push(slope.atan().to_degrees());
    }
    if let Some(bad) = angle_deg.iter().find(|v| v.abs() >= 45.0) {
        return Err(ReflectanceError::Precondition(format!("incidence angle {bad:.1}° out of range")));
    }
    Ok(IncidenceProfile { azimuth_deg, angle_deg, diameter_mm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: usize,
    /// Non-negative amplitude.
    pub amplitude: f64,
    /// Phase `φ` of `amplitude · cos(order·θ − φ)`, degrees in `[0, 360)`.
    pub phase_deg: f64,
}

/// Least-squares sinusoid fit of orders `0..=max_order` to samples taken at
/// `θ_a = 2πa/N`.
pub fn azimuthal_harmonics(values: &[f64], max_order: usize) -> Result<Vec<Harmonic>, ReflectanceError> {
    let n = values.len();
    if n < 2 * max_order + 1 {
        return Err(ReflectanceError::Precondition(format!(
            "{n} samples cannot resolve {max_order} harmonic orders"
        )));
    }
    let cols = 2 * max_order + 1;
    let design = DMatrix::from_fn(n, cols, |a, c| {
        let t = std::f64::consts::TAU * a as f64 / n as f64;
        match c {
            0 => 1.0,
            c if c % 2 == 1 => (((c + 1) / 2) as f64 * t).cos(),
            c => ((c / 2) as f64 * t).sin(),
        }
    });
    let y = DVector::from_column_slice(values);
    let coef = design
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| ReflectanceError::Precondition(e.to_string()))?;
    let mut out = vec![Harmonic {
        order: 0,
        amplitude: coef[0].abs(),
        phase_deg: if coef[0] < 0.0 { 180.0 } else { 0.0 },
    }];
    for k in 1..=max_order {
        let (a, b) = (coef[2 * k - 1], coef[2 * k]);
        out.push(Harmonic {
            order: k,
            amplitude: a.hypot(b),
            phase_deg: b.atan2(a).to_degrees().rem_euclid(360.0),
        });
    }
    Ok(out)
}

/// RMS residual of a fit using orders `0..=order` divided by the amplitude
/// of the highest fitted order.
pub fn relative_fit_residual(values: &[f64], order: usize) -> Result<f64, ReflectanceError> {
    let h = azimuthal_harmonics(values, order)?;
    let n = values.len();
    let ss: f64 = values
        .iter()
        .enumerate()
        .map(|(a, &v)| {
            let t = std::f64::consts::TAU * a as f64 / n as f64;
            let fit: f64 = h
                .iter()
                .map(|c| {
                    if c.order == 0 {
                        c.amplitude * if c.phase_deg == 0.0 { 1.0 } else { -1.0 }
                    } else {
                        c.amplitude * (c.order as f64 * t - c.phase_deg.to_radians()).cos()
                    }
                })
                .sum();
            (v - fit).powi(2)
        })
        .sum();
    Ok((ss / n as f64).sqrt() / h[order].amplitude.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::phantom::{generate_phantom, PhantomSpec};
    use crate::volume::VolumeDims;

    #[test]
    fn harmonics_of_known_signals() {
        let h = azimuthal_harmonics(&[5.0; 36], 4).unwrap();
        assert!((h[0].amplitude - 5.0).abs() < 1e-12);
        assert!(h[1..].iter().all(|c| c.amplitude < 1e-10));

        let s: Vec<f64> = (0..72)
            .map(|a| 3.0 * (std::f64::consts::TAU * a as f64 / 72.0 - 30f64.to_radians()).cos())
            .collect();
        let h = azimuthal_harmonics(&s, 4).unwrap();
        assert!((h[1].amplitude - 3.0).abs() < 1e-10);
        assert!((h[1].phase_deg - 30.0).abs() < 1e-8);
        assert!(h.iter().filter(|c| c.order != 1).all(|c| c.amplitude < 1e-10));

        let s: Vec<f64> = (0..360)
            .map(|a| {
                let t = std::f64::consts::TAU * a as f64 / 360.0;
                2.0 + t.cos() + 0.5 * (2.0 * t).cos()
            })
            .collect();
        let h = azimuthal_harmonics(&s, 4).unwrap();
        let amps: Vec<f64> = h.iter().map(|c| c.amplitude).collect();
        for (got, want) in amps.iter().zip([2.0, 1.0, 0.5, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!(azimuthal_harmonics(&[1.0; 8], 4).is_err());
    }

    fn phantom(beam: [f64; 2], curvature: f64) -> crate::volume::phantom::Phantom {
        let mut spec = PhantomSpec::flat(VolumeDims::new(16, 160, 160));
        spec.beam_offset = beam;
        spec.retinal_curvature = curvature;
        generate_phantom(&spec).unwrap()
    }

    #[test]
    fn flat_surface_has_zero_incidence() {
        let p = phantom([0.0, 0.0], 0.0);
        let prof = incidence_angle_profile(&p.surfaces, Laterality::Right, [2.25, 2.25], 3.4, 90).unwrap();
        assert!(prof.angle_deg.iter().all(|a| a.abs() < 1e-9));
    }

    #[test]
    fn spherical_cap_gives_constant_angle() {
        let c = 0.06;
        let p = phantom([0.0, 0.0], c);
        let prof = incidence_angle_profile(&p.surfaces, Laterality::Right, [2.25, 2.25], 3.4, 90).unwrap();
        let analytic = (1.7f64 * c).atan().to_degrees();
        assert!(prof.angle_deg.iter().all(|a| (a - analytic).abs() < 0.2));
    }

    #[test]
    fn tilted_cap_profile_is_first_order() {
        let p = phantom([1.2, -0.8], 0.05);
        let prof = incidence_angle_profile(&p.surfaces, Laterality::Right, [2.25, 2.25], 3.4, 128).unwrap();
        assert!(relative_fit_residual(&prof.angle_deg, 1).unwrap() < 0.01);
    }

    #[test]
    fn circle_through_disc_is_rejected() {
        let p = phantom([0.0, 0.0], 0.0);
        assert!(matches!(
            incidence_angle_profile(&p.surfaces, Laterality::Right, [2.25, 2.25], 1.6, 90),
            Err(ReflectanceError::DiscIntersection)
        ));
    }
}
