//! Synthetic scene generation: parametric shapes with known symmetry,
//! partial-view rendering, and dataset serialization.
//!
//! Scenes live in normalized units: the metric scene box
//! `[-0.3, 0.3]^3` meters maps to `[-1, 1]^3`. Shapes are sampled in
//! meters and converted on render. Ground-truth rotations are Haar-uniform
//! and deliberately NOT canonicalized for symmetric shapes: a cylinder
//! observed from one viewpoint keeps a single arbitrary label along its
//! symmetry orbit, which is exactly the ambiguity the sampler must model.

mod render;
mod shapes;

pub use render::{farthest_point_sample, hidden_point_visibility, render_partial, RenderConfig};
pub use shapes::{sample_instance, ShapeCategory, ShapeParams, ShapeTemplate};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose9D, SymmetrySpec, UnitQuaternion};
use crate::net::PointCloud;
use crate::seedstream::{Domain, SeedStream};

/// Metric bridge: one normalized unit is 0.3 m.
pub const METERS_PER_UNIT: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("only {visible} of {needed} required points visible; resample the viewpoint")]
    InsufficientVisible { visible: usize, needed: usize },
    #[error("no admissible viewpoint found after {0} attempts")]
    ViewpointSearchFailed(usize),
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Metric meters -> normalized units.
pub fn normalize_translation(meters: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| meters[i] / METERS_PER_UNIT)
}

/// Normalized units -> metric meters.
pub fn denormalize_translation(units: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| units[i] * METERS_PER_UNIT)
}

/// One dataset record.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub cloud: PointCloud,
    pub gt_pose: Pose9D,
    pub symmetry: SymmetrySpec,
    pub category: ShapeCategory,
    pub handle_visible: bool,
    pub seed: u64,
}

/// Wire layout of one JSON-lines record.
#[derive(Debug, Serialize, Deserialize)]
struct SceneRecord {
    category: ShapeCategory,
    points: Vec<[f64; 3]>,
    gt_rot6d: [f64; 6],
    gt_trans: [f64; 3],
    sym: SymmetrySpec,
    handle_visible: bool,
    seed: u64,
}

impl From<&SceneSample> for SceneRecord {
    fn from(s: &SceneSample) -> Self {
        Self {
            category: s.category,
            points: s.cloud.points.clone(),
            gt_rot6d: s.gt_pose.rot6d,
            gt_trans: s.gt_pose.translation,
            sym: s.symmetry.clone(),
            handle_visible: s.handle_visible,
            seed: s.seed,
        }
    }
}

impl TryFrom<SceneRecord> for SceneSample {
    type Error = crate::net::NetError;

    fn try_from(r: SceneRecord) -> Result<Self, Self::Error> {
        Ok(Self {
            cloud: PointCloud::new(r.points)?,
            gt_pose: Pose9D::new(r.gt_rot6d, r.gt_trans),
            symmetry: r.sym,
            category: r.category,
            handle_visible: r.handle_visible,
            seed: r.seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub counts: Vec<(ShapeCategory, usize)>,
    pub n_points: usize,
    pub noise_std: f64,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            counts: vec![
                (ShapeCategory::Cylinder, 1),
                (ShapeCategory::Bowl, 1),
                (ShapeCategory::Box, 1),
                (ShapeCategory::Mug, 1),
            ],
            n_points: 256,
            noise_std: 0.002,
            master_seed: 0,
        }
    }
}

/// Sidecar describing how a dataset file was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub counts: Vec<(ShapeCategory, usize)>,
    pub n_points: usize,
    pub noise_std: f64,
    pub parameter_ranges: Vec<(ShapeCategory, String)>,
    pub total: usize,
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Generates one record from its derived stream.
pub fn generate_scene(
    category: ShapeCategory,
    n_points: usize,
    noise_std: f64,
    seeds: &SeedStream,
    index: u64,
) -> Result<SceneSample, SynthError> {
    let mut rng = seeds.domain_stream(Domain::DataGen, index);
    let template = sample_instance(category, &mut rng);
    let q = UnitQuaternion::random(&mut rng);
    let translation: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let gt_pose = Pose9D::from_parts(&q.to_rotation(), translation);
    let cfg = RenderConfig { n_points, noise_std, ..RenderConfig::default() };
    const MAX_TRIES: usize = 16;
    for _ in 0..MAX_TRIES {
        let dir = random_unit_axis(&mut rng);
        match render_partial(&template, &gt_pose, &dir, &cfg, &mut rng) {
            Ok((cloud, handle_visible)) => {
                let symmetry = match category {
                    ShapeCategory::Mug => {
                        if handle_visible {
                            SymmetrySpec::None
                        } else {
                            SymmetrySpec::continuous_z()
                        }
                    }
                    _ => template.symmetry.clone(),
                };
                return Ok(SceneSample {
                    cloud,
                    gt_pose,
                    symmetry,
                    category,
                    handle_visible,
                    seed: index,
                });
            }
            Err(SynthError::InsufficientVisible { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::ViewpointSearchFailed(MAX_TRIES))
}

/// Smooth-trajectory generation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub category: ShapeCategory,
    pub frames: usize,
    pub n_points: usize,
    pub noise_std: f64,
    /// Per-frame rotation step, degrees (0 freezes the object).
    pub rot_step_deg: f64,
    /// Per-frame translation step, scene units.
    pub trans_step: f64,
    pub master_seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            category: ShapeCategory::Box,
            frames: 50,
            n_points: 256,
            noise_std: 0.002,
            rot_step_deg: 3.0,
            trans_step: 0.015,
            master_seed: 0,
        }
    }
}

/// Generates a smooth trajectory of one instance observed by a static
/// camera: per-frame rotation by `rot_step_deg` about a slowly varying
/// axis and a bounded translation drift. Inter-frame motion stays well
/// inside the tracker's smoothness invariants.
pub fn generate_trajectory(
    spec: &TrajectorySpec,
) -> Result<(Vec<(PointCloud, Pose9D)>, SymmetrySpec), SynthError> {
    assert!(spec.frames >= 2, "a trajectory needs at least 2 frames");
    let seeds = SeedStream::new(spec.master_seed);
    let mut rng = seeds.domain_stream(Domain::DataGen, u64::MAX);
    let template = sample_instance(spec.category, &mut rng);
    let mut rotation = UnitQuaternion::random(&mut rng).to_rotation();
    let mut translation: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
    let view = random_unit_axis(&mut rng);
    let axis = random_unit_axis(&mut rng);
    let cfg = RenderConfig {
        n_points: spec.n_points,
        noise_std: spec.noise_std,
        ..RenderConfig::default()
    };
    let mut frames = Vec::with_capacity(spec.frames);
    for frame in 0..spec.frames {
        let pose = Pose9D::from_parts(&rotation, translation);
        let mut frame_rng = seeds.domain_stream(Domain::DataGen, frame as u64);
        let mut rendered = None;
        for _ in 0..16 {
            match render_partial(&template, &pose, &view, &cfg, &mut frame_rng) {
                Ok((cloud, _)) => {
                    rendered = Some(cloud);
                    break;
                }
                Err(SynthError::InsufficientVisible { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let cloud = rendered.ok_or(SynthError::ViewpointSearchFailed(16))?;
        frames.push((cloud, pose));
        // advance the motion: wobble the axis a little, step the angle,
        // drift the translation with reflection at the inner box
        let wobble = random_unit_axis(&mut rng);
        let blended = [
            axis[0] + 0.2 * wobble[0],
            axis[1] + 0.2 * wobble[1],
            axis[2] + 0.2 * wobble[2],
        ];
        let norm = (blended.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let step_axis = [blended[0] / norm, blended[1] / norm, blended[2] / norm];
        let step = crate::geometry::RotationMatrix::from_axis_angle(
            &step_axis,
            spec.rot_step_deg.to_radians(),
        );
        rotation = step.mul(&rotation);
        for d in 0..3 {
            translation[d] += rng.gen_range(-spec.trans_step..spec.trans_step);
            translation[d] = translation[d].clamp(-0.8, 0.8);
        }
    }
    Ok((frames, template.symmetry.clone()))
}

/// Uniform random direction on the unit sphere.
pub fn random_unit_axis<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Generates the dataset and manifest files. Records are produced in
/// parallel from per-index streams and written in index order, so the
/// output bytes depend only on the spec.
pub fn generate_dataset(
    spec: &DatasetSpec,
    dataset_path: &Path,
    manifest_path: &Path,
) -> Result<DatasetManifest, SynthError> {
    let seeds = SeedStream::new(spec.master_seed);
    let mut plan = Vec::new();
    for &(cat, count) in &spec.counts {
        assert!(count >= 1, "per-category counts must be at least 1");
        for _ in 0..count {
            plan.push(cat);
        }
    }
    let samples: Result<Vec<SceneSample>, SynthError> = plan
        .par_iter()
        .enumerate()
        .map(|(i, &cat)| generate_scene(cat, spec.n_points, spec.noise_std, &seeds, i as u64))
        .collect();
    let samples = samples?;
    write_dataset(dataset_path, &samples)?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        master_seed: spec.master_seed,
        counts: spec.counts.clone(),
        n_points: spec.n_points,
        noise_std: spec.noise_std,
        parameter_ranges: shapes::parameter_ranges(),
        total: samples.len(),
    };
    let f = BufWriter::new(std::fs::File::create(manifest_path)?);
    serde_json::to_writer_pretty(f, &manifest).map_err(io_err)?;
    Ok(manifest)
}

pub fn write_dataset(path: &Path, samples: &[SceneSample]) -> Result<(), SynthError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        let rec = SceneRecord::from(s);
        serde_json::to_writer(&mut w, &rec).map_err(io_err)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<SceneSample>, SynthError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SceneRecord = serde_json::from_str(&line).map_err(|e| SynthError::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(SceneSample::try_from(rec).map_err(|e| SynthError::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn io_err(e: serde_json::Error) -> SynthError {
    SynthError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
