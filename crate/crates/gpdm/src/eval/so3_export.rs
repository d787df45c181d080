//! Rotation-distribution exports: yaw/pitch/roll CSV plus an SVG scatter.

use std::io::Write;
use std::path::Path;

use crate::geometry::RotationMatrix;

use super::EvalError;

/// ZYX Euler angles in degrees: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
///
/// Returns `(yaw, pitch, roll, gimbal)`; `gimbal` marks `|pitch| > 89.9`
/// degrees, where yaw and roll are no longer separable.
pub fn euler_zyx_degrees(r: &RotationMatrix) -> (f64, f64, f64, bool) {
    let m = &r.m;
    let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
    let gimbal = pitch.to_degrees().abs() > 89.9;
    let (yaw, roll) = if gimbal {
        // fold the remaining freedom into yaw
        (m[1][2].atan2(m[1][1]), 0.0)
    } else {
        (m[1][0].atan2(m[0][0]), m[2][1].atan2(m[2][2]))
    };
    (yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees(), gimbal)
}

/// Writes `(yaw, pitch, roll, is_gt, gimbal)` rows for every rotation plus
/// the ground truth, and an SVG scatter next to it (same stem, `.svg`).
/// Yaw plots as latitude, pitch as longitude, roll as color.
pub fn export_so3_scatter(
    rotations: &[RotationMatrix],
    gt: &RotationMatrix,
    csv_path: &Path,
) -> Result<(), EvalError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    super::write_csv_header(&mut w, "yaw_deg,pitch_deg,roll_deg,is_gt,gimbal")?;
    let mut rows = Vec::with_capacity(rotations.len() + 1);
    for r in rotations {
        let (y, p, rl, g) = euler_zyx_degrees(r);
        writeln!(w, "{y},{p},{rl},0,{}", g as u8)?;
        rows.push((y, p, rl, false));
    }
    let (gy, gp, grl, gg) = euler_zyx_degrees(gt);
    writeln!(w, "{gy},{gp},{grl},1,{}", gg as u8)?;
    rows.push((gy, gp, grl, true));
    drop(w);

    let svg_path = csv_path.with_extension("svg");
    let mut s = std::io::BufWriter::new(std::fs::File::create(svg_path)?);
    let (width, height) = (720.0, 380.0);
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )?;
    writeln!(s, "<rect width=\"{width}\" height=\"{height}\" fill=\"#101418\"/>")?;
    // longitude = pitch in [-90, 90] mapped to x, latitude = yaw in
    // [-180, 180] mapped to y
    let map_x = |pitch: f64| (pitch + 90.0) / 180.0 * (width - 40.0) + 20.0;
    let map_y = |yaw: f64| (1.0 - (yaw + 180.0) / 360.0) * (height - 40.0) + 20.0;
    for (yaw, pitch, roll, is_gt) in &rows {
        let hue = (roll + 180.0) / 360.0 * 360.0;
        if *is_gt {
            writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"9\" fill=\"none\" stroke=\"white\" stroke-width=\"2\"/>",
                map_x(*pitch),
                map_y(*yaw)
            )?;
        } else {
            writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"hsl({hue:.0},85%,60%)\"/>",
                map_x(*pitch),
                map_y(*yaw)
            )?;
        }
    }
    writeln!(s, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;
    use crate::seedstream::SeedStream;

    #[test]
    fn identity_maps_to_zero_angles() {
        let (y, p, r, g) = euler_zyx_degrees(&RotationMatrix::identity());
        assert_eq!((y, p, r), (0.0, 0.0, 0.0));
        assert!(!g);
    }

    #[test]
    fn euler_round_trip_recomposes() {
        let mut rng = SeedStream::new(81).stream(0);
        for _ in 0..200 {
            let rot = RotationMatrix::random(&mut rng);
            let (y, p, r, gimbal) = euler_zyx_degrees(&rot);
            if gimbal {
                continue;
            }
            let rebuilt = RotationMatrix::rot_z(y.to_radians())
                .mul(&RotationMatrix::rot_y(p.to_radians()))
                .mul(&RotationMatrix::rot_x(r.to_radians()));
            assert!(rebuilt.approx_eq(&rot, 1e-9));
        }
    }

    #[test]
    fn gimbal_degenerate_rotations_are_flagged() {
        let rot = RotationMatrix::rot_y(90f64.to_radians());
        let (_, pitch, roll, gimbal) = euler_zyx_degrees(&rot);
        assert!(gimbal);
        assert!((pitch - 90.0).abs() < 1e-9);
        assert_eq!(roll, 0.0);
    }

    #[test]
    fn export_row_count_contract() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("so3.csv");
        let mut rng = SeedStream::new(82).stream(0);
        let rots: Vec<RotationMatrix> = (0..50)
            .map(|_| UnitQuaternion::random(&mut rng).to_rotation())
            .collect();
        export_so3_scatter(&rots, &RotationMatrix::identity(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1; // header
        assert_eq!(data_rows, 51);
        let gt_rows = text.lines().filter(|l| l.ends_with(",1,0")).count();
        assert_eq!(gt_rows, 1);
        assert!(path.with_extension("svg").exists());
    }
}
