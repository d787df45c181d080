//! `gpdm train`: fit a score or energy checkpoint on a dataset.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

use gpdm::net::{
    save_checkpoint, train_energy, train_score, NetArch, Role, TrainData, TrainExample,
    TrainingConfig,
};
use gpdm::sde::{LambdaWeight, NoiseSchedule};

use crate::config::{section, write_snapshot, write_telemetry, Common, FileConfig, Violations};
use crate::{CliError, CliResult};

#[derive(Parser, Debug)]
pub struct Args {
    /// Which model to train.
    #[arg(long, value_parser = ["score", "energy"])]
    role: Option<String>,
    /// Training dataset (JSON-lines).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory (checkpoint.gpdm + loss.csv).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Score checkpoint that warm-starts energy training.
    #[arg(long)]
    score_ckpt: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    scenes_per_batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Cosine-decay floor for the learning rate.
    #[arg(long)]
    lr_min: Option<f64>,
    /// DSM residual weight lambda(t).
    #[arg(long, value_parser = ["sigma-squared", "one"])]
    lambda: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Section {
    role: Option<String>,
    dataset: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    score_ckpt: Option<PathBuf>,
    steps: Option<usize>,
    batch_size: Option<usize>,
    scenes_per_batch: Option<usize>,
    lr: Option<f64>,
    lr_min: Option<f64>,
    lambda: Option<String>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    seed: u64,
    role: String,
    dataset: PathBuf,
    out_dir: PathBuf,
    score_ckpt: Option<PathBuf>,
    steps: usize,
    batch_size: usize,
    scenes_per_batch: usize,
    lr: f64,
    lr_min: Option<f64>,
    lambda: String,
}

pub fn run(args: Args, file: &FileConfig, common: &Common) -> CliResult<()> {
    let sec: Section = section(&file.train, "train")?;
    let mut violations = Violations::default();
    let role_name = args
        .role
        .or(sec.role)
        .ok_or_else(|| CliError::config("train: --role is required"))?;
    let dataset = args
        .dataset
        .or(sec.dataset)
        .ok_or_else(|| CliError::config("train: --dataset is required"))?;
    let out_dir = args
        .out_dir
        .or(sec.out_dir)
        .ok_or_else(|| CliError::config("train: --out-dir is required"))?;
    let score_ckpt = args.score_ckpt.or(sec.score_ckpt);
    let steps = args.steps.or(sec.steps).unwrap_or(2000);
    let batch_size = args.batch_size.or(sec.batch_size).unwrap_or(192);
    let scenes_per_batch = args.scenes_per_batch.or(sec.scenes_per_batch).unwrap_or(12);
    let lr = args.lr.or(sec.lr).unwrap_or(1e-4);
    let lr_min = args.lr_min.or(sec.lr_min);
    let lambda_name = args.lambda.or(sec.lambda).unwrap_or_else(|| "sigma-squared".into());
    let role = match role_name.as_str() {
        "score" => Role::Score,
        "energy" => Role::Energy,
        other => {
            violations.check(false, format!("unknown role '{other}'"));
            Role::Score
        }
    };
    let lambda = match lambda_name.as_str() {
        "sigma-squared" => LambdaWeight::SigmaSquared,
        "one" => LambdaWeight::One,
        other => {
            violations.check(false, format!("unknown lambda '{other}'"));
            LambdaWeight::SigmaSquared
        }
    };
    violations.check(steps > 0, "steps must be positive");
    violations.check(batch_size > 0, "batch-size must be positive");
    violations.check(
        scenes_per_batch > 0 && batch_size % scenes_per_batch == 0,
        "scenes-per-batch must divide batch-size",
    );
    violations.check(
        role != Role::Energy || score_ckpt.is_some(),
        "energy training requires --score-ckpt for the warm start",
    );
    violations.finish()?;

    let resolved = Resolved {
        seed: common.seed,
        role: role_name,
        dataset: dataset.clone(),
        out_dir: out_dir.clone(),
        score_ckpt: score_ckpt.clone(),
        steps,
        batch_size,
        scenes_per_batch,
        lr,
        lr_min,
        lambda: lambda_name,
    };
    write_snapshot(&out_dir, &resolved)?;

    let scenes = super::load_dataset(&dataset)?;
    let data: Vec<TrainExample> = scenes
        .iter()
        .map(|s| TrainExample { pose: s.gt_pose.as_vec9(), cloud: Some(s.cloud.clone()) })
        .collect();
    let schedule = NoiseSchedule::default();
    let cfg = TrainingConfig {
        batch_size,
        scenes_per_batch,
        steps,
        lr,
        lr_min,
        master_seed: common.seed,
        lambda,
        ..TrainingConfig::default()
    };
    let t0 = Instant::now();
    let outcome = match role {
        Role::Score => train_score(TrainData::Fixed(&data), &schedule, &NetArch::default(), &cfg),
        Role::Energy => {
            let init = super::load_params(
                score_ckpt.as_ref().expect("checked above"),
                Role::Score,
                "--score-ckpt",
            )?;
            train_energy(TrainData::Fixed(&data), &schedule, &init, &cfg)
        }
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(diverged) => {
            // keep the last finite state for post-mortems, then fail
            let _ = save_checkpoint(&out_dir.join("checkpoint.gpdm"), &diverged.last_finite);
            write_loss_csv(&out_dir, &diverged.loss_curve)?;
            return Err(CliError::Numerical(format!(
                "training diverged at step {}; last finite checkpoint retained",
                diverged.step
            )));
        }
    };
    save_checkpoint(&out_dir.join("checkpoint.gpdm"), &outcome.params)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_loss_csv(&out_dir, &outcome.loss_curve)?;
    write_telemetry(
        &out_dir,
        &serde_json::json!({
            "stage": "train",
            "steps": steps,
            "wall_seconds": t0.elapsed().as_secs_f64(),
        }),
    )?;
    println!(
        "trained {} steps; final loss {:.6}",
        steps,
        outcome.loss_curve.last().map(|(_, l)| *l).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn write_loss_csv(out_dir: &std::path::Path, curve: &[(usize, f64)]) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(out_dir.join("loss.csv"))
            .map_err(|e| CliError::Data(e.to_string()))?,
    );
    gpdm::eval::write_csv_header(&mut w, "step,loss").map_err(|e| CliError::Data(e.to_string()))?;
    for (step, loss) in curve {
        writeln!(w, "{step},{loss}").map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}
