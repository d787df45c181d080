//! Rotation representations, conversions, averaging, and pose error metrics.
//!
//! Rotations travel through three forms: the 6D representation used as the
//! diffusion state (first two columns of a rotation matrix), full 3x3
//! matrices, and unit quaternions for averaging. The 6D <-> SO(3) maps are
//! the Gram-Schmidt pair: `sixd_to_rotation` orthonormalizes, while
//! `rotation_to_sixd` reads off the first two columns.

mod matrix;
mod pose;
mod quaternion;

pub use matrix::RotationMatrix;
pub use pose::Pose9D;
pub use quaternion::{average_quaternions, jacobi_eigen_4x4, UnitQuaternion};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate 6D rotation input: {0}")]
    DegenerateInput(&'static str),
    #[error("matrix is not a rotation (orthonormality violated by {0:.3e})")]
    InvalidRotation(f64),
    #[error("empty input list")]
    EmptyInput,
    #[error("symmetric eigen-solve did not converge after {0} sweeps")]
    EigenFailure(usize),
}

/// Declared symmetry of an object shape, in the object frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SymmetrySpec {
    None,
    ContinuousAxis { axis: [f64; 3] },
}

impl SymmetrySpec {
    pub fn continuous_z() -> Self {
        SymmetrySpec::ContinuousAxis { axis: [0.0, 0.0, 1.0] }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, SymmetrySpec::ContinuousAxis { .. })
    }
}

/// Gram-Schmidt map from the 6D representation to SO(3) (f_GS).
///
/// Input layout: `[a1, a2]` with `a1 = r6[0..3]`, `a2 = r6[3..6]`.
pub fn sixd_to_rotation(r6: &[f64; 6]) -> Result<RotationMatrix, GeometryError> {
    let a1 = [r6[0], r6[1], r6[2]];
    let a2 = [r6[3], r6[4], r6[5]];
    let n1 = norm3(&a1);
    if n1 <= 1e-8 {
        return Err(GeometryError::DegenerateInput("first column near zero"));
    }
    let b1 = [a1[0] / n1, a1[1] / n1, a1[2] / n1];
    let proj = dot3(&b1, &a2);
    let u = [a2[0] - proj * b1[0], a2[1] - proj * b1[1], a2[2] - proj * b1[2]];
    let n2 = norm3(&u);
    if n2 <= 1e-8 {
        return Err(GeometryError::DegenerateInput(
            "second column near parallel to the first",
        ));
    }
    let b2 = [u[0] / n2, u[1] / n2, u[2] / n2];
    let b3 = cross3(&b1, &b2);
    Ok(RotationMatrix::from_columns(&b1, &b2, &b3))
}

/// Projection from SO(3) to the 6D representation (g_GS): the first two columns.
pub fn rotation_to_sixd(rot: &RotationMatrix) -> Result<[f64; 6], GeometryError> {
    rot.validate(1e-4)?;
    let b1 = rot.column(0);
    let b2 = rot.column(1);
    Ok([b1[0], b1[1], b1[2], b2[0], b2[1], b2[2]])
}

/// Geodesic distance between two rotations, in degrees.
pub fn geodesic_angle(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    let rel = r1.transpose_mul(r2);
    // Clamp against floating-point drift at 0 and 180 degrees.
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Rotation error that ignores spin around a declared symmetry axis, degrees.
///
/// For a continuous axis `a` this is the angle between the mapped axes
/// `R_pred a` and `R_gt a`; any rotation about the axis itself scores zero.
pub fn symmetry_aware_rotation_error(
    r_pred: &RotationMatrix,
    r_gt: &RotationMatrix,
    sym: &SymmetrySpec,
) -> f64 {
    match sym {
        SymmetrySpec::None => geodesic_angle(r_pred, r_gt),
        SymmetrySpec::ContinuousAxis { axis } => {
            let ap = r_pred.apply(axis);
            let ag = r_gt.apply(axis);
            // atan2 of (cross, dot) is the same angle as acos of the clamped
            // dot but stays exact near 0 and 180 degrees.
            let c = dot3(&ap, &ag).clamp(-1.0, 1.0);
            let s = norm3(&cross3(&ap, &ag));
            s.atan2(c).to_degrees()
        }
    }
}

/// Euclidean translation error in centimeters; inputs are metric (meters).
pub fn translation_error(t_pred: &[f64; 3], t_gt: &[f64; 3]) -> f64 {
    let d = [t_pred[0] - t_gt[0], t_pred[1] - t_gt[1], t_pred[2] - t_gt[2]];
    norm3(&d) * 100.0
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub(crate) fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize3(a: &[f64; 3]) -> [f64; 3] {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seedstream::SeedStream;

    fn rot_z(deg: f64) -> RotationMatrix {
        RotationMatrix::rot_z(deg.to_radians())
    }

    #[test]
    fn sixd_identity_passthrough() {
        let r = sixd_to_rotation(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(r.approx_eq(&RotationMatrix::identity(), 1e-15));
    }

    #[test]
    fn sixd_gram_schmidt_by_hand() {
        // a1=(2,0,0), a2=(1,1,0) orthonormalizes to the identity columns.
        let r = sixd_to_rotation(&[2.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(r.approx_eq(&RotationMatrix::identity(), 1e-12));
    }

    #[test]
    fn sixd_degenerate_inputs_error() {
        assert!(matches!(
            sixd_to_rotation(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Err(GeometryError::DegenerateInput(_))
        ));
        // a2 parallel to a1
        assert!(matches!(
            sixd_to_rotation(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]),
            Err(GeometryError::DegenerateInput(_))
        ));
    }

    #[test]
    fn rotation_to_sixd_reads_columns() {
        let r6 = rotation_to_sixd(&RotationMatrix::identity()).unwrap();
        assert_eq!(r6, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let r6 = rotation_to_sixd(&rot_z(90.0)).unwrap();
        for (got, want) in r6.iter().zip([0.0, 1.0, 0.0, -1.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn rotation_to_sixd_rejects_non_rotation() {
        let mut m = RotationMatrix::identity();
        m.m[0][0] = 1.1;
        assert!(matches!(
            rotation_to_sixd(&m),
            Err(GeometryError::InvalidRotation(_))
        ));
    }

    #[test]
    fn round_trip_identity_on_so3() {
        // f_GS . g_GS = id over 1000 Haar-random rotations.
        let mut rng = SeedStream::new(7).stream(0);
        for _ in 0..1000 {
            let r = RotationMatrix::random(&mut rng);
            let back = sixd_to_rotation(&rotation_to_sixd(&r).unwrap()).unwrap();
            assert!(back.approx_eq(&r, 1e-9));
            back.validate(1e-9).unwrap();
            assert!((back.det() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn geodesic_basics() {
        let r = RotationMatrix::random(&mut SeedStream::new(3).stream(1));
        assert!(geodesic_angle(&r, &r) < 1e-9);
        let a = geodesic_angle(&RotationMatrix::identity(), &rot_z(90.0));
        assert!((a - 90.0).abs() < 1e-9);
    }

    #[test]
    fn geodesic_matches_quaternion_composition() {
        let r1 = RotationMatrix::rot_x(10f64.to_radians());
        let r2 = RotationMatrix::rot_y(10f64.to_radians());
        let q1 = UnitQuaternion::from_rotation(&r1);
        let q2 = UnitQuaternion::from_rotation(&r2);
        let oracle = q1.angle_to(&q2);
        let got = geodesic_angle(&r1, &r2);
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn symmetry_error_ignores_axis_spin() {
        let sym = SymmetrySpec::continuous_z();
        let r_gt = RotationMatrix::random(&mut SeedStream::new(11).stream(0));
        let r_pred = r_gt.mul(&rot_z(73.0));
        let e = symmetry_aware_rotation_error(&r_pred, &r_gt, &sym);
        assert!(e < 1e-9, "axis spin must be free, got {e}");
        let plain = symmetry_aware_rotation_error(&r_pred, &r_gt, &SymmetrySpec::None);
        assert!((plain - 73.0).abs() < 1e-9);
    }

    #[test]
    fn symmetry_error_tilted_axis() {
        // Axis z tilted by rot_x(5 deg): angle between mapped z-axes is 5 deg.
        let sym = SymmetrySpec::continuous_z();
        let e = symmetry_aware_rotation_error(
            &RotationMatrix::rot_x(5f64.to_radians()),
            &RotationMatrix::identity(),
            &sym,
        );
        assert!((e - 5.0).abs() < 1e-12);
    }

    #[test]
    fn translation_error_in_cm() {
        assert_eq!(translation_error(&[0.0; 3], &[0.0; 3]), 0.0);
        let e = translation_error(&[0.03, 0.0, 0.0], &[0.0; 3]);
        assert!((e - 3.0).abs() < 1e-12);
        // independent recomputation on a random pair
        let mut rng = SeedStream::new(5).stream(2);
        let a = std::array::from_fn(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let b = std::array::from_fn(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let oracle = ((a[0] - b[0]) as f64).hypot((a[1] - b[1]) as f64).hypot(a[2] - b[2]) * 100.0;
        assert!((translation_error(&a, &b) - oracle).abs() < 1e-12);
    }
}
