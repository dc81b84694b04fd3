//! Plain-text and PGM exports of polar maps.

use std::io::Write;

use super::PolarMap;
use crate::scalar::Scalar;

/// dB range mapped onto the 16-bit grey scale.
pub const PGM_DB_RANGE: [f64; 2] = [-12.0, 6.0];

/// One line per ring, comma-separated azimuth bins; invalid bins are empty.
pub fn write_polar_csv<T: Scalar, W: Write>(pm: &PolarMap<T>, mut w: W) -> std::io::Result<()> {
    for k in 0..pm.geometry.radius_bins {
        let line: Vec<String> = (0..pm.geometry.azimuth_bins)
            .map(|a| {
                if *pm.valid.get(a, k) {
                    format!("{}", pm.values.get(a, k).as_f64())
                } else {
                    String::new()
                }
            })
            .collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Binary 16-bit PGM (P5, big-endian samples); ring 0 is the top row.
/// Invalid bins are written as 0.
pub fn write_polar_pgm<T: Scalar, W: Write>(pm: &PolarMap<T>, mut w: W) -> std::io::Result<()> {
    let (na, nr) = (pm.geometry.azimuth_bins, pm.geometry.radius_bins);
    write!(w, "P5\n{na} {nr}\n65535\n")?;
    let [lo, hi] = PGM_DB_RANGE;
    let mut buf = Vec::with_capacity(na * nr * 2);
    for k in 0..nr {
        for a in 0..na {
            let v = if *pm.valid.get(a, k) {
                let t = ((pm.values.get(a, k).as_f64() - lo) / (hi - lo)).clamp(0.0, 1.0);
                (t * 65535.0).round() as u16
            } else {
                0
            };
            buf.extend_from_slice(&v.to_be_bytes());
        }
    }
    w.write_all(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflectance::PolarGeometry;

    #[test]
    fn pgm_scaling_and_csv_layout() {
        let g = PolarGeometry { azimuth_bins: 64, radius_bins: 2, r_min: 1.0, r_max: 2.0 };
        let mut pm = PolarMap::<f64>::from_fn(g, |r, _| if r < 1.5 { -12.0 } else { 6.0 });
        pm.valid.set(3, 1, false);
        let mut pgm = Vec::new();
        write_polar_pgm(&pm, &mut pgm).unwrap();
        let header = b"P5\n64 2\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        let body = &pgm[header.len()..];
        assert_eq!(body.len(), 64 * 2 * 2);
        assert_eq!(&body[0..2], &[0, 0]);
        assert_eq!(&body[128..130], &[0xff, 0xff]);
        assert_eq!(&body[128 + 6..128 + 8], &[0, 0]);

        let mut csv = Vec::new();
        write_polar_csv(&pm, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').nth(3), Some(""));
        assert_eq!(lines[0].split(',').count(), 64);
    }
}
