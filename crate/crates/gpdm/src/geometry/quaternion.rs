//! Unit quaternions and eigenvalue-based rotation averaging.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{GeometryError, RotationMatrix};

/// Unit quaternion in (w, x, y, z) order. `q` and `-q` denote the same
/// rotation; serialized values are canonicalized to `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }.normalized()
    }

    pub fn identity() -> Self {
        Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// Flips the sign so that `w >= 0` (ties broken on the first nonzero
    /// vector component), giving a reproducible representative.
    pub fn canonicalized(&self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            *self
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Relative rotation angle in degrees, sign-insensitive.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let rel = self.conjugate().mul(other);
        let vec_norm = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
        (2.0 * vec_norm.atan2(rel.w.abs())).to_degrees()
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Shepperd's method: branch on the largest of trace and diagonal terms.
    pub fn from_rotation(r: &RotationMatrix) -> Self {
        let m = &r.m;
        let tr = r.trace();
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Self {
                w: 0.25 * s,
                x: (m[2][1] - m[1][2]) / s,
                y: (m[0][2] - m[2][0]) / s,
                z: (m[1][0] - m[0][1]) / s,
            }
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Self {
                w: (m[2][1] - m[1][2]) / s,
                x: 0.25 * s,
                y: (m[0][1] + m[1][0]) / s,
                z: (m[0][2] + m[2][0]) / s,
            }
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Self {
                w: (m[0][2] - m[2][0]) / s,
                x: (m[0][1] + m[1][0]) / s,
                y: 0.25 * s,
                z: (m[1][2] + m[2][1]) / s,
            }
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Self {
                w: (m[1][0] - m[0][1]) / s,
                x: (m[0][2] + m[2][0]) / s,
                y: (m[1][2] + m[2][1]) / s,
                z: 0.25 * s,
            }
        };
        q.normalized().canonicalized()
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        RotationMatrix {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w),
                ],
                [
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w),
                ],
                [
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    /// Haar-uniform random rotation: four normals, normalized.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let w: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        Self { w, x, y, z }.normalized().canonicalized()
    }

    fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

/// Mean rotation as the dominant eigenvector of the averaged outer-product
/// matrix `(1/M) sum w_i q_i q_i^T`. Sign flips of the inputs cancel in the
/// outer products, so the result is well defined on the double cover.
pub fn average_quaternions(
    qs: &[UnitQuaternion],
    weights: Option<&[f64]>,
) -> Result<UnitQuaternion, GeometryError> {
    if qs.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    if let Some(w) = weights {
        assert_eq!(w.len(), qs.len(), "one weight per quaternion");
    }
    let mut acc = [[0.0f64; 4]; 4];
    let mut total = 0.0;
    for (i, q) in qs.iter().enumerate() {
        let w = weights.map_or(1.0, |ws| ws[i]);
        total += w;
        let v = q.as_array();
        for r in 0..4 {
            for c in 0..4 {
                acc[r][c] += w * v[r] * v[c];
            }
        }
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let (evals, evecs) = jacobi_eigen_4x4(&acc)?;
    let mut best = 0;
    for i in 1..4 {
        if evals[i] > evals[best] {
            best = i;
        }
    }
    let v = [evecs[0][best], evecs[1][best], evecs[2][best], evecs[3][best]];
    Ok(UnitQuaternion { w: v[0], x: v[1], y: v[2], z: v[3] }
        .normalized()
        .canonicalized())
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 4x4 matrix.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in the columns of
/// the returned matrix. Deterministic; converges to off-diagonal norm below
/// 1e-12 of the matrix scale.
pub fn jacobi_eigen_4x4(
    a: &[[f64; 4]; 4],
) -> Result<([f64; 4], [[f64; 4]; 4]), GeometryError> {
    const MAX_SWEEPS: usize = 50;
    let mut m = *a;
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for r in 0..4 {
            for c in (r + 1)..4 {
                off = off.max(m[r][c].abs());
            }
        }
        if off <= 1e-12 * scale {
            let evals = [m[0][0], m[1][1], m[2][2], m[3][3]];
            return Ok((evals, v));
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if m[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Apply the Givens rotation G(p,q) on both sides.
                for k in 0..4 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..4 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..4 {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(GeometryError::EigenFailure(MAX_SWEEPS))
}
