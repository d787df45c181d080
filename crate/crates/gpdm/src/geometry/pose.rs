//! The 9D pose state: 6D rotation representation plus translation.

use serde::{Deserialize, Serialize};

use super::{rotation_to_sixd, sixd_to_rotation, GeometryError, RotationMatrix};

/// Diffusion state variable: `[Rx | Ry | T]`.
///
/// Raw diffusion states are unconstrained 9-vectors; canonical poses
/// (post-aggregation outputs) satisfy `rot6d == g_GS(f_GS(rot6d))`.
/// Translations are in normalized scene units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose9D {
    pub rot6d: [f64; 6],
    pub translation: [f64; 3],
}

impl Pose9D {
    pub fn new(rot6d: [f64; 6], translation: [f64; 3]) -> Self {
        Self { rot6d, translation }
    }

    pub fn identity() -> Self {
        Self { rot6d: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0], translation: [0.0; 3] }
    }

    pub fn from_parts(rot: &RotationMatrix, translation: [f64; 3]) -> Self {
        let b1 = rot.column(0);
        let b2 = rot.column(1);
        Self {
            rot6d: [b1[0], b1[1], b1[2], b2[0], b2[1], b2[2]],
            translation,
        }
    }

    pub fn as_vec9(&self) -> [f64; 9] {
        [
            self.rot6d[0],
            self.rot6d[1],
            self.rot6d[2],
            self.rot6d[3],
            self.rot6d[4],
            self.rot6d[5],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ]
    }

    pub fn from_vec9(v: &[f64; 9]) -> Self {
        Self {
            rot6d: [v[0], v[1], v[2], v[3], v[4], v[5]],
            translation: [v[6], v[7], v[8]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_vec9().iter().all(|x| x.is_finite())
    }

    pub fn rotation(&self) -> Result<RotationMatrix, GeometryError> {
        sixd_to_rotation(&self.rot6d)
    }

    /// Projects the rotation block through f_GS then g_GS.
    pub fn canonicalize(&self) -> Result<Self, GeometryError> {
        let rot = sixd_to_rotation(&self.rot6d)?;
        Ok(Self { rot6d: rotation_to_sixd(&rot)?, translation: self.translation })
    }

    pub fn is_canonical(&self, tol: f64) -> bool {
        match self.canonicalize() {
            Ok(c) => self
                .rot6d
                .iter()
                .zip(c.rot6d.iter())
                .all(|(a, b)| (a - b).abs() <= tol),
            Err(_) => false,
        }
    }
}
