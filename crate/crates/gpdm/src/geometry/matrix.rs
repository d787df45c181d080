//! Dense 3x3 rotation matrices, stored row-major.

use rand::Rng;

use super::{dot3, GeometryError, UnitQuaternion};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    /// Row-major entries: `m[row][col]`.
    pub m: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn from_columns(c0: &[f64; 3], c1: &[f64; 3], c2: &[f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            m[r][0] = c0[r];
            m[r][1] = c1[r];
            m[r][2] = c2[r];
        }
        Self { m }
    }

    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                t[r][c] = self.m[c][r];
            }
        }
        Self { m: t }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += self.m[r][k] * other.m[k][c];
                }
                out[r][c] = s;
            }
        }
        Self { m: out }
    }

    /// `self^T * other`, the relative rotation used by geodesic distance.
    pub fn transpose_mul(&self, other: &Self) -> Self {
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += self.m[k][r] * other.m[k][c];
                }
                out[r][c] = s;
            }
        }
        Self { m: out }
    }

    pub fn apply(&self, v: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for r in 0..3 {
            out[r] = dot3(&self.m[r], v);
        }
        out
    }

    /// Checks orthonormal columns and positive determinant.
    pub fn validate(&self, tol: f64) -> Result<(), GeometryError> {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let ci = self.column(i);
                let cj = self.column(j);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot3(&ci, &cj) - want).abs());
            }
        }
        worst = worst.max((self.det() - 1.0).abs());
        if worst > tol {
            return Err(GeometryError::InvalidRotation(worst));
        }
        Ok(())
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn rot_x(rad: f64) -> Self {
        let (s, c) = rad.sin_cos();
        Self { m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]] }
    }

    pub fn rot_y(rad: f64) -> Self {
        let (s, c) = rad.sin_cos();
        Self { m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]] }
    }

    pub fn rot_z(rad: f64) -> Self {
        let (s, c) = rad.sin_cos();
        Self { m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Rodrigues rotation about a unit axis.
    pub fn from_axis_angle(axis: &[f64; 3], rad: f64) -> Self {
        let a = super::normalize3(axis);
        let (s, c) = rad.sin_cos();
        let t = 1.0 - c;
        let (x, y, z) = (a[0], a[1], a[2]);
        Self {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    /// Haar-uniform random rotation via a normalized Gaussian quaternion.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        UnitQuaternion::random(rng).to_rotation()
    }

    /// Twist angle about `axis` of the relative rotation `gt^T * self`,
    /// in degrees within (-180, 180]. Used for symmetry-orbit coverage.
    pub fn twist_about_axis(&self, gt: &Self, axis: &[f64; 3]) -> f64 {
        let rel = gt.transpose_mul(self);
        let q = UnitQuaternion::from_rotation(&rel);
        let a = super::normalize3(axis);
        // Swing-twist decomposition: project the vector part onto the axis.
        let proj = q.x * a[0] + q.y * a[1] + q.z * a[2];
        let twist_half = proj.atan2(q.w);
        let mut deg = (2.0 * twist_half).to_degrees();
        if deg <= -180.0 {
            deg += 360.0;
        } else if deg > 180.0 {
            deg -= 360.0;
        }
        deg
    }
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}




#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_angle_matches_elementary() {
        let r1 = RotationMatrix::from_axis_angle(&[0.0, 0.0, 1.0], 0.3);
        let r2 = RotationMatrix::rot_z(0.3);
        assert!(r1.approx_eq(&r2, 1e-15));
    }

    #[test]
    fn twist_recovers_axis_spin() {
        let gt = RotationMatrix::rot_x(0.4);
        let spun = gt.mul(&RotationMatrix::rot_z(37f64.to_radians()));
        let tw = spun.twist_about_axis(&gt, &[0.0, 0.0, 1.0]);
        assert!((tw - 37.0).abs() < 1e-9, "{tw}");
        let neg = gt.mul(&RotationMatrix::rot_z(-143f64.to_radians()));
        let tw = neg.twist_about_axis(&gt, &[0.0, 0.0, 1.0]);
        assert!((tw + 143.0).abs() < 1e-9, "{tw}");
    }

    #[test]
    fn random_rotations_are_valid() {
        let mut rng = crate::seedstream::SeedStream::new(2).stream(0);
        for _ in 0..100 {
            RotationMatrix::random(&mut rng).validate(1e-12).unwrap();
        }
    }
}
