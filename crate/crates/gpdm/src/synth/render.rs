//! Partial-view rendering: spherical-flip visibility, farthest-point
//! down-sampling, and additive point noise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::Pose9D;
use crate::net::PointCloud;

use super::shapes::{dense_surface, ShapeTemplate};
use super::{SynthError, METERS_PER_UNIT};

#[derive(Debug, Clone, Copy)]
pub struct RenderConfig {
    pub n_points: usize,
    /// Gaussian point noise, normalized units.
    pub noise_std: f64,
    /// Dense surface samples per output point.
    pub dense_factor: usize,
    /// Camera distance from the scene origin, normalized units.
    pub standoff: f64,
    /// Spherical-flip radius as a multiple of the farthest point distance.
    pub flip_radius_factor: f64,
    /// Visible handle-surface points needed to call the handle visible.
    pub handle_point_threshold: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            n_points: 256,
            noise_std: 0.002,
            dense_factor: 8,
            standoff: 4.0,
            flip_radius_factor: 3000.0,
            handle_point_threshold: 5,
        }
    }
}

/// Spherical-flip hidden-point removal.
///
/// Points are flipped through a sphere of radius `R = factor * max_dist`
/// around the camera: `p_hat = p' (2R/||p'|| - 1)`. A point is visible when
/// its flipped image is extreme along its own viewing direction, i.e. no
/// other flipped point reaches further along that ray. Nearer points flip
/// farther out, so anything they shadow drops out.
///
/// The criterion approaches true hull membership as R grows: a point with
/// depth excess `dd` behind another dies when their angular gap is under
/// `sqrt(dd / R)`, while a slanted front surface only self-shadows inside
/// `slope / (R / max_dist)`. The default factor keeps the latter below the
/// dense sampling resolution.
pub fn hidden_point_visibility(
    points: &[[f64; 3]],
    camera: &[f64; 3],
    flip_radius_factor: f64,
) -> Vec<bool> {
    let n = points.len();
    let mut rel: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut max_d: f64 = 0.0;
    for p in points {
        let r = [p[0] - camera[0], p[1] - camera[1], p[2] - camera[2]];
        max_d = max_d.max(norm(&r));
        rel.push(r);
    }
    let flip_r = flip_radius_factor * max_d;
    let flipped: Vec<[f64; 3]> = rel
        .iter()
        .map(|r| {
            let d = norm(r).max(1e-12);
            let s = 2.0 * flip_r / d - 1.0;
            [r[0] * s, r[1] * s, r[2] * s]
        })
        .collect();
    (0..n)
        .map(|i| {
            let fi = &flipped[i];
            let di = norm(fi).max(1e-12);
            let u = [fi[0] / di, fi[1] / di, fi[2] / di];
            let own = di;
            flipped
                .iter()
                .all(|fj| fj[0] * u[0] + fj[1] * u[1] + fj[2] * u[2] <= own + 1e-12)
        })
        .collect()
}

/// Greedy farthest-point sampling; deterministic given the RNG used for
/// the start index. If fewer inputs than requested, the selection wraps.
pub fn farthest_point_sample<R: Rng>(
    points: &[[f64; 3]],
    n: usize,
    rng: &mut R,
) -> Vec<[f64; 3]> {
    assert!(!points.is_empty());
    let start = rng.gen_range(0..points.len());
    let mut chosen = Vec::with_capacity(n);
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut current = start;
    for _ in 0..n.min(points.len()) {
        chosen.push(points[current]);
        let c = points[current];
        let mut best = 0;
        let mut best_d2 = -1.0;
        for (j, p) in points.iter().enumerate() {
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
            if d2 < min_d2[j] {
                min_d2[j] = d2;
            }
            if min_d2[j] > best_d2 {
                best_d2 = min_d2[j];
                best = j;
            }
        }
        current = best;
    }
    // wrap when the visible set is smaller than the request
    let mut i = 0;
    while chosen.len() < n {
        chosen.push(chosen[i]);
        i += 1;
    }
    chosen
}

/// Renders a partially observed cloud of exactly `n_points` points.
///
/// `view_dir` is the camera direction on the unit sphere; the camera sits
/// at `standoff * view_dir` in normalized units. Returns the cloud and the
/// handle-visibility flag (false for handle-less categories).
pub fn render_partial<R: Rng>(
    template: &ShapeTemplate,
    gt_pose: &Pose9D,
    view_dir: &[f64; 3],
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<(PointCloud, bool), SynthError> {
    let (visible, handle_visible) = render_visible_dense(template, gt_pose, view_dir, cfg, rng)?;
    let needed = cfg.n_points;
    if visible.len() < needed.div_ceil(4) {
        return Err(SynthError::InsufficientVisible { visible: visible.len(), needed });
    }
    let mut sampled = farthest_point_sample(&visible, needed, rng);
    for p in &mut sampled {
        for d in 0..3 {
            p[d] += cfg.noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok((
        PointCloud::new(sampled).expect("rendered cloud is valid"),
        handle_visible,
    ))
}

/// Dense visible world-frame points before down-sampling and noise.
pub(crate) fn render_visible_dense<R: Rng>(
    template: &ShapeTemplate,
    gt_pose: &Pose9D,
    view_dir: &[f64; 3],
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<(Vec<[f64; 3]>, bool), SynthError> {
    let rot = gt_pose
        .rotation()
        .map_err(|_| SynthError::Format {
            path: "<pose>".into(),
            line: 0,
            msg: "gt pose has a degenerate rotation".into(),
        })?;
    let dense_n = cfg.dense_factor * cfg.n_points;
    let dense = dense_surface(template, dense_n, rng);
    let mut world = Vec::with_capacity(dense.len());
    let mut handle_tags = Vec::with_capacity(dense.len());
    for sp in &dense {
        let obj_units = [
            sp.p[0] / METERS_PER_UNIT,
            sp.p[1] / METERS_PER_UNIT,
            sp.p[2] / METERS_PER_UNIT,
        ];
        let r = rot.apply(&obj_units);
        world.push([
            r[0] + gt_pose.translation[0],
            r[1] + gt_pose.translation[1],
            r[2] + gt_pose.translation[2],
        ]);
        handle_tags.push(sp.is_handle);
    }
    let camera = [
        cfg.standoff * view_dir[0],
        cfg.standoff * view_dir[1],
        cfg.standoff * view_dir[2],
    ];
    let mask = hidden_point_visibility(&world, &camera, cfg.flip_radius_factor);
    let mut visible = Vec::new();
    let mut visible_handle = 0usize;
    for i in 0..world.len() {
        if mask[i] {
            visible.push(world[i]);
            if handle_tags[i] {
                visible_handle += 1;
            }
        }
    }
    Ok((visible, visible_handle >= cfg.handle_point_threshold))
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
