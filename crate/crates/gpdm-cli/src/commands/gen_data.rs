//! `gpdm gen-data`: synthetic dataset generation.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

use gpdm::synth::{generate_dataset, DatasetSpec, ShapeCategory};

use crate::config::{section, write_snapshot, write_telemetry, Common, FileConfig, Violations};
use crate::{CliError, CliResult};

#[derive(Parser, Debug)]
pub struct Args {
    /// Output directory (dataset.jsonl + manifest.json).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Per-category counts as `category=count`, repeatable.
    #[arg(long = "count", value_name = "CAT=N")]
    counts: Vec<String>,
    /// Points per cloud.
    #[arg(long)]
    n_points: Option<usize>,
    /// Additive point noise std in normalized units.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Emit a smooth trajectory of this many frames instead of a dataset.
    #[arg(long)]
    trajectory_frames: Option<usize>,
    /// Category for trajectory mode.
    #[arg(long)]
    category: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Section {
    out_dir: Option<PathBuf>,
    counts: Option<Vec<(String, usize)>>,
    n_points: Option<usize>,
    noise_std: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    seed: u64,
    out_dir: PathBuf,
    counts: Vec<(String, usize)>,
    n_points: usize,
    noise_std: f64,
}

pub fn run(args: Args, file: &FileConfig, common: &Common) -> CliResult<()> {
    let sec: Section = section(&file.gen_data, "gen-data")?;
    let mut violations = Violations::default();
    let out_dir = args
        .out_dir
        .clone()
        .or(sec.out_dir.clone())
        .ok_or_else(|| CliError::config("gen-data: --out-dir is required"))?;
    if let Some(frames) = args.trajectory_frames {
        return run_trajectory(&args, frames, &out_dir, common);
    }
    let mut counts: Vec<(String, usize)> = Vec::new();
    if !args.counts.is_empty() {
        for spec in &args.counts {
            match spec.split_once('=') {
                Some((cat, n)) => match n.parse::<usize>() {
                    Ok(n) => counts.push((cat.to_string(), n)),
                    Err(_) => violations.check(false, format!("bad count '{spec}'")),
                },
                None => violations.check(false, format!("bad count '{spec}', want CAT=N")),
            }
        }
    } else if let Some(c) = sec.counts {
        counts = c;
    } else {
        counts = ShapeCategory::ALL.iter().map(|c| (c.name().to_string(), 64)).collect();
    }
    let n_points = args.n_points.or(sec.n_points).unwrap_or(256);
    let noise_std = args.noise_std.or(sec.noise_std).unwrap_or(0.002);
    violations.check(n_points >= 16, "n-points must be at least 16");
    violations.check(noise_std >= 0.0, "noise-std must be non-negative");
    let mut typed = Vec::new();
    for (name, n) in &counts {
        match ShapeCategory::from_str(name) {
            Ok(cat) => typed.push((cat, *n)),
            Err(e) => violations.check(false, e.to_string()),
        }
        violations.check(*n >= 1, format!("count for '{name}' must be at least 1"));
    }
    violations.finish()?;

    let resolved = Resolved {
        seed: common.seed,
        out_dir: out_dir.clone(),
        counts,
        n_points,
        noise_std,
    };
    write_snapshot(&out_dir, &resolved)?;
    let spec = DatasetSpec {
        counts: typed,
        n_points,
        noise_std,
        master_seed: common.seed,
    };
    let t0 = Instant::now();
    let manifest = generate_dataset(
        &spec,
        &out_dir.join("dataset.jsonl"),
        &out_dir.join("manifest.json"),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    write_telemetry(
        &out_dir,
        &serde_json::json!({
            "stage": "gen-data",
            "records": manifest.total,
            "wall_seconds": t0.elapsed().as_secs_f64(),
        }),
    )?;
    println!("wrote {} records to {}", manifest.total, out_dir.display());
    Ok(())
}

fn run_trajectory(
    args: &Args,
    frames: usize,
    out_dir: &std::path::Path,
    common: &Common,
) -> CliResult<()> {
    let mut violations = Violations::default();
    violations.check(frames >= 2, "trajectory needs at least 2 frames");
    let category_name = args.category.clone().unwrap_or_else(|| "box".into());
    let category = match ShapeCategory::from_str(&category_name) {
        Ok(c) => c,
        Err(e) => {
            violations.check(false, e.to_string());
            ShapeCategory::Box
        }
    };
    violations.finish()?;
    let spec = gpdm::synth::TrajectorySpec {
        category,
        frames,
        n_points: args.n_points.unwrap_or(256),
        noise_std: args.noise_std.unwrap_or(0.002),
        master_seed: common.seed,
        ..gpdm::synth::TrajectorySpec::default()
    };
    write_snapshot(
        out_dir,
        &serde_json::json!({
            "seed": common.seed,
            "trajectory_frames": frames,
            "category": category_name,
            "n_points": spec.n_points,
            "noise_std": spec.noise_std,
        }),
    )?;
    let t0 = Instant::now();
    let (traj_frames, symmetry) =
        gpdm::synth::generate_trajectory(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    let traj = gpdm::tracker::Trajectory { frames: traj_frames, category, symmetry };
    traj.validate().map_err(|e| CliError::Data(e.to_string()))?;
    traj.write_jsonl(&out_dir.join("trajectory.jsonl"))
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_telemetry(
        out_dir,
        &serde_json::json!({
            "stage": "gen-data-trajectory",
            "frames": frames,
            "wall_seconds": t0.elapsed().as_secs_f64(),
        }),
    )?;
    println!("wrote {frames}-frame trajectory to {}", out_dir.display());
    Ok(())
}
