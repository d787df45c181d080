//! Parametric shape templates and dense surface sampling.
//!
//! All dimensions are in meters, object frame, origin at the shape center.
//! Symmetric categories have their symmetry axis along object z.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

use crate::geometry::SymmetrySpec;

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeCategory {
    Cylinder,
    Bowl,
    Box,
    Mug,
}

impl ShapeCategory {
    pub const ALL: [ShapeCategory; 4] = [
        ShapeCategory::Cylinder,
        ShapeCategory::Bowl,
        ShapeCategory::Box,
        ShapeCategory::Mug,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeCategory::Cylinder => "cylinder",
            ShapeCategory::Bowl => "bowl",
            ShapeCategory::Box => "box",
            ShapeCategory::Mug => "mug",
        }
    }
}

impl FromStr for ShapeCategory {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cylinder" => Ok(ShapeCategory::Cylinder),
            "bowl" => Ok(ShapeCategory::Bowl),
            "box" => Ok(ShapeCategory::Box),
            "mug" => Ok(ShapeCategory::Mug),
            other => Err(SynthError::UnknownCategory(other.to_string())),
        }
    }
}

/// Intra-class shape parameters, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShapeParams {
    Cylinder { radius: f64, height: f64 },
    Bowl { radius: f64, wall: f64 },
    /// An L-profile: base slab plus a back panel along one depth edge.
    /// A plain cuboid would carry a 2-fold rotational ambiguity on every
    /// axis; the L-profile makes the category genuinely asymmetric.
    Box { width: f64, depth: f64, height: f64, thickness: f64 },
    Mug { radius: f64, height: f64, handle_major: f64, handle_minor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTemplate {
    pub category: ShapeCategory,
    pub params: ShapeParams,
    pub symmetry: SymmetrySpec,
}

/// Declared per-category sampling ranges (documented in the manifest).
pub(crate) fn parameter_ranges() -> Vec<(ShapeCategory, String)> {
    vec![
        (ShapeCategory::Cylinder, "radius 0.03..0.06 m, height 0.10..0.22 m".into()),
        (ShapeCategory::Bowl, "radius 0.05..0.09 m, wall 0.003..0.006 m".into()),
        (
            ShapeCategory::Box,
            "width 0.10..0.20 m, depth 0.08..0.16 m, height 0.08..0.18 m, thickness 0.015..0.030 m"
                .into(),
        ),
        (
            ShapeCategory::Mug,
            "radius 0.03..0.05 m, height 0.08..0.12 m, handle 0.020..0.032 / 0.006..0.010 m"
                .into(),
        ),
    ]
}

/// Draws one template with parameters uniform over the declared ranges.
pub fn sample_instance<R: Rng>(category: ShapeCategory, rng: &mut R) -> ShapeTemplate {
    let params = match category {
        ShapeCategory::Cylinder => ShapeParams::Cylinder {
            radius: rng.gen_range(0.03..0.06),
            height: rng.gen_range(0.10..0.22),
        },
        ShapeCategory::Bowl => ShapeParams::Bowl {
            radius: rng.gen_range(0.05..0.09),
            wall: rng.gen_range(0.003..0.006),
        },
        ShapeCategory::Box => ShapeParams::Box {
            width: rng.gen_range(0.10..0.20),
            depth: rng.gen_range(0.08..0.16),
            height: rng.gen_range(0.08..0.18),
            thickness: rng.gen_range(0.015..0.030),
        },
        ShapeCategory::Mug => ShapeParams::Mug {
            radius: rng.gen_range(0.03..0.05),
            height: rng.gen_range(0.08..0.12),
            handle_major: rng.gen_range(0.020..0.032),
            handle_minor: rng.gen_range(0.006..0.010),
        },
    };
    let symmetry = match category {
        ShapeCategory::Box => SymmetrySpec::None,
        // mug symmetry is resolved per sample from handle visibility
        _ => SymmetrySpec::continuous_z(),
    };
    ShapeTemplate { category, params, symmetry }
}

/// One dense surface sample: object-frame point plus a handle tag.
pub(crate) struct SurfacePoint {
    pub p: [f64; 3],
    pub is_handle: bool,
}

/// Area-weighted uniform sampling of the template surface.
pub(crate) fn dense_surface<R: Rng>(
    template: &ShapeTemplate,
    count: usize,
    rng: &mut R,
) -> Vec<SurfacePoint> {
    match &template.params {
        ShapeParams::Cylinder { radius, height } => {
            sample_cylinder(*radius, *height, count, rng)
        }
        ShapeParams::Bowl { radius, wall } => sample_bowl(*radius, *wall, count, rng),
        ShapeParams::Box { width, depth, height, thickness } => {
            sample_lbox(*width, *depth, *height, *thickness, count, rng)
        }
        ShapeParams::Mug { radius, height, handle_major, handle_minor } => {
            sample_mug(*radius, *height, *handle_major, *handle_minor, count, rng)
        }
    }
}

fn pick_region<R: Rng>(areas: &[f64], rng: &mut R) -> usize {
    let total: f64 = areas.iter().sum();
    let u: f64 = rng.gen_range(0.0..total);
    let mut cum = 0.0;
    for (i, a) in areas.iter().enumerate() {
        cum += a;
        if u <= cum {
            return i;
        }
    }
    areas.len() - 1
}

fn sample_cylinder<R: Rng>(r: f64, h: f64, count: usize, rng: &mut R) -> Vec<SurfacePoint> {
    let areas = [2.0 * PI * r * h, PI * r * r, PI * r * r];
    (0..count)
        .map(|_| {
            let region = pick_region(&areas, rng);
            let theta = rng.gen_range(0.0..2.0 * PI);
            let p = match region {
                0 => [r * theta.cos(), r * theta.sin(), rng.gen_range(-h / 2.0..h / 2.0)],
                _ => {
                    let rr = r * rng.gen_range(0.0f64..1.0).sqrt();
                    let z = if region == 1 { h / 2.0 } else { -h / 2.0 };
                    [rr * theta.cos(), rr * theta.sin(), z]
                }
            };
            SurfacePoint { p, is_handle: false }
        })
        .collect()
}

fn sample_bowl<R: Rng>(r: f64, wall: f64, count: usize, rng: &mut R) -> Vec<SurfacePoint> {
    // opening up (+z): outer and inner lower hemispheres plus the rim ring
    let ri = r - wall;
    let areas = [2.0 * PI * r * r, 2.0 * PI * ri * ri, PI * (r * r - ri * ri)];
    (0..count)
        .map(|_| {
            let region = pick_region(&areas, rng);
            let theta = rng.gen_range(0.0..2.0 * PI);
            let p = match region {
                0 | 1 => {
                    let rad = if region == 0 { r } else { ri };
                    // uniform on a lower hemisphere: z = -rad * u
                    let u: f64 = rng.gen_range(0.0..1.0);
                    let z = -rad * u;
                    let s = (rad * rad - z * z).sqrt();
                    [s * theta.cos(), s * theta.sin(), z]
                }
                _ => {
                    let rr = (rng.gen_range(ri * ri..r * r)).sqrt();
                    [rr * theta.cos(), rr * theta.sin(), 0.0]
                }
            };
            SurfacePoint { p, is_handle: false }
        })
        .collect()
}

struct Cuboid {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Cuboid {
    fn contains(&self, p: &[f64; 3], slack: f64) -> bool {
        (0..3).all(|d| p[d] > self.lo[d] + slack && p[d] < self.hi[d] - slack)
    }

    fn face_areas(&self) -> [f64; 6] {
        let dx = self.hi[0] - self.lo[0];
        let dy = self.hi[1] - self.lo[1];
        let dz = self.hi[2] - self.lo[2];
        [dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy]
    }

    fn sample_face<R: Rng>(&self, face: usize, rng: &mut R) -> [f64; 3] {
        let mut p = [
            rng.gen_range(self.lo[0]..self.hi[0]),
            rng.gen_range(self.lo[1]..self.hi[1]),
            rng.gen_range(self.lo[2]..self.hi[2]),
        ];
        let axis = face / 2;
        p[axis] = if face % 2 == 0 { self.lo[axis] } else { self.hi[axis] };
        p
    }
}

fn sample_lbox<R: Rng>(
    w: f64,
    d: f64,
    h: f64,
    t: f64,
    count: usize,
    rng: &mut R,
) -> Vec<SurfacePoint> {
    // base slab plus back panel along the +y depth edge, centered on z
    let z0 = -h / 2.0;
    let base = Cuboid { lo: [-w / 2.0, -d / 2.0, z0], hi: [w / 2.0, d / 2.0, z0 + t] };
    let panel = Cuboid {
        lo: [-w / 2.0, d / 2.0 - t, z0 + t],
        hi: [w / 2.0, d / 2.0, z0 + h],
    };
    let mut areas = Vec::with_capacity(12);
    areas.extend_from_slice(&base.face_areas());
    areas.extend_from_slice(&panel.face_areas());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let region = pick_region(&areas, rng);
        let (cuboid, other) = if region < 6 { (&base, &panel) } else { (&panel, &base) };
        let p = cuboid.sample_face(region % 6, rng);
        // union surface: drop points strictly inside the other part
        if other.contains(&p, 1e-12) {
            continue;
        }
        out.push(SurfacePoint { p, is_handle: false });
    }
    out
}

fn sample_mug<R: Rng>(
    r: f64,
    h: f64,
    a: f64,
    b: f64,
    count: usize,
    rng: &mut R,
) -> Vec<SurfacePoint> {
    // body: open-top cylinder; handle: half torus in the x-z plane at +x
    let lateral = 2.0 * PI * r * h;
    let bottom = PI * r * r;
    let handle = 2.0 * PI * b * PI * a; // half of a full torus area
    let areas = [lateral, bottom, handle];
    (0..count)
        .map(|_| {
            let region = pick_region(&areas, rng);
            match region {
                0 => {
                    let theta = rng.gen_range(0.0..2.0 * PI);
                    SurfacePoint {
                        p: [r * theta.cos(), r * theta.sin(), rng.gen_range(-h / 2.0..h / 2.0)],
                        is_handle: false,
                    }
                }
                1 => {
                    let theta = rng.gen_range(0.0..2.0 * PI);
                    let rr = r * rng.gen_range(0.0f64..1.0).sqrt();
                    SurfacePoint {
                        p: [rr * theta.cos(), rr * theta.sin(), -h / 2.0],
                        is_handle: false,
                    }
                }
                _ => {
                    // loop angle phi in [-pi/2, pi/2] arcs outward from the wall
                    let phi = rng.gen_range(-PI / 2.0..PI / 2.0);
                    let psi = rng.gen_range(0.0..2.0 * PI);
                    let ring = a + b * psi.cos();
                    SurfacePoint {
                        p: [r + ring * phi.cos() - a * 0.25, b * psi.sin(), ring * phi.sin()],
                        is_handle: true,
                    }
                }
            }
        })
        .collect()
}
