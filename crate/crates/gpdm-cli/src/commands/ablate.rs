//! `gpdm ablate`: K/delta grids and ranking-mode comparison tables.

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

use gpdm::estimator::{AggregationConfig, RankingMode};
use gpdm::eval::{ablation_grid, ranking_comparison};
use gpdm::net::Role;
use gpdm::sde::NoiseSchedule;

use crate::config::{section, write_snapshot, write_telemetry, Common, FileConfig, Violations};
use crate::{CliError, CliResult};

use super::OdeSettings;

#[derive(Parser, Debug)]
pub struct Args {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    score_ckpt: Option<PathBuf>,
    #[arg(long)]
    energy_ckpt: Option<PathBuf>,
    /// Output directory (ablation.csv + ranking.csv).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Candidate counts, e.g. --ks 10,50,100.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// Keep fractions, e.g. --deltas 0.2,0.4,0.6,0.8,1.0.
    #[arg(long, value_delimiter = ',')]
    deltas: Vec<f64>,
    /// Use only the first N scenes.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Section {
    dataset: Option<PathBuf>,
    score_ckpt: Option<PathBuf>,
    energy_ckpt: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    ks: Option<Vec<usize>>,
    deltas: Option<Vec<f64>>,
    limit: Option<usize>,
    ode: Option<OdeSettings>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    seed: u64,
    dataset: PathBuf,
    score_ckpt: PathBuf,
    energy_ckpt: PathBuf,
    out_dir: PathBuf,
    ks: Vec<usize>,
    deltas: Vec<f64>,
    limit: Option<usize>,
    ode: OdeSettings,
}

pub fn run(args: Args, file: &FileConfig, common: &Common) -> CliResult<()> {
    let sec: Section = section(&file.ablate, "ablate")?;
    let mut violations = Violations::default();
    let dataset = args
        .dataset
        .or(sec.dataset)
        .ok_or_else(|| CliError::config("ablate: --dataset is required"))?;
    let score_ckpt = args
        .score_ckpt
        .or(sec.score_ckpt)
        .ok_or_else(|| CliError::config("ablate: --score-ckpt is required"))?;
    let energy_ckpt = args
        .energy_ckpt
        .or(sec.energy_ckpt)
        .ok_or_else(|| CliError::config("ablate: --energy-ckpt is required"))?;
    let out_dir = args
        .out_dir
        .or(sec.out_dir)
        .ok_or_else(|| CliError::config("ablate: --out-dir is required"))?;
    let ks = if args.ks.is_empty() {
        sec.ks.unwrap_or_else(|| vec![10, 50, 100])
    } else {
        args.ks
    };
    let deltas = if args.deltas.is_empty() {
        sec.deltas.unwrap_or_else(|| vec![0.2, 0.4, 0.6, 0.8, 1.0])
    } else {
        args.deltas
    };
    let limit = args.limit.or(sec.limit);
    let ode = sec.ode.unwrap_or_default();
    violations.check(!ks.is_empty(), "need at least one K");
    violations.check(!deltas.is_empty(), "need at least one delta");
    for &k in &ks {
        violations.check(k >= 1, format!("K = {k} must be at least 1"));
        for &d in &deltas {
            violations.check(
                d > 0.0 && d <= 1.0 && (d * k as f64).floor() >= 1.0,
                format!("floor(delta*K) must be >= 1 for K={k}, delta={d}"),
            );
        }
    }
    violations.finish()?;

    let resolved = Resolved {
        seed: common.seed,
        dataset: dataset.clone(),
        score_ckpt: score_ckpt.clone(),
        energy_ckpt: energy_ckpt.clone(),
        out_dir: out_dir.clone(),
        ks: ks.clone(),
        deltas: deltas.clone(),
        limit,
        ode,
    };
    write_snapshot(&out_dir, &resolved)?;

    let score = super::load_params(&score_ckpt, Role::Score, "--score-ckpt")?;
    let energy = super::load_params(&energy_ckpt, Role::Energy, "--energy-ckpt")?;
    let mut scenes = super::load_dataset(&dataset)?;
    if let Some(n) = limit {
        scenes.truncate(n);
    }
    if scenes.is_empty() {
        return Err(CliError::Data("dataset has no scenes".into()));
    }
    let schedule = NoiseSchedule::default();
    let ode_cfg = ode.to_config(&schedule);
    let t0 = Instant::now();
    let table = ablation_grid(
        &scenes, &score, &energy, &schedule, &ode_cfg, &ks, &deltas, common.seed,
    )
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    table
        .write_csv(&out_dir.join("ablation.csv"))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let agg = AggregationConfig { k: 50, delta: 0.6, ranking: RankingMode::Energy };
    let ranking = ranking_comparison(
        &scenes, &score, &energy, &schedule, &ode_cfg, &agg, common.seed,
    )
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    ranking
        .write_csv(&out_dir.join("ranking.csv"))
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_telemetry(
        &out_dir,
        &serde_json::json!({
            "stage": "ablate",
            "scenes": scenes.len(),
            "wall_seconds": t0.elapsed().as_secs_f64(),
        }),
    )?;
    println!(
        "ablation over {} scenes, {} K values, {} deltas",
        scenes.len(),
        ks.len(),
        deltas.len()
    );
    Ok(())
}
