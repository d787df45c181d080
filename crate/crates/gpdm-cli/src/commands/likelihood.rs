//! `gpdm likelihood-check`: empirical audit that energy ranking agrees with
//! the exact ODE-likelihood ranking (Kendall tau-b per scene).

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

use gpdm::eval::kendall_tau_b;
use gpdm::net::{encode_pointcloud, energy_forward_batch, Role};
use gpdm::sampler::{log_likelihood_ode, sample_candidates, NetDivergence, NetScore};
use gpdm::sde::NoiseSchedule;
use gpdm::seedstream::{Domain, SeedStream};

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
    /// Output directory (kendall.csv).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of scenes to audit.
    #[arg(long)]
    scenes: Option<usize>,
    /// Candidates per scene.
    #[arg(long)]
    k: Option<usize>,
    /// Hutchinson probes; 0 uses the exact nine-derivative trace.
    #[arg(long)]
    hutchinson_probes: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Section {
    dataset: Option<PathBuf>,
    score_ckpt: Option<PathBuf>,
    energy_ckpt: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    scenes: Option<usize>,
    k: Option<usize>,
    hutchinson_probes: Option<usize>,
    ode: Option<OdeSettings>,
    likelihood_ode: Option<OdeSettings>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    seed: u64,
    dataset: PathBuf,
    score_ckpt: PathBuf,
    energy_ckpt: PathBuf,
    out_dir: PathBuf,
    scenes: usize,
    k: usize,
    hutchinson_probes: usize,
    ode: OdeSettings,
    likelihood_ode: OdeSettings,
}

pub fn run(args: Args, file: &FileConfig, common: &Common) -> CliResult<()> {
    let sec: Section = section(&file.likelihood_check, "likelihood-check")?;
    let mut violations = Violations::default();
    let dataset = args
        .dataset
        .or(sec.dataset)
        .ok_or_else(|| CliError::config("likelihood-check: --dataset is required"))?;
    let score_ckpt = args
        .score_ckpt
        .or(sec.score_ckpt)
        .ok_or_else(|| CliError::config("likelihood-check: --score-ckpt is required"))?;
    let energy_ckpt = args
        .energy_ckpt
        .or(sec.energy_ckpt)
        .ok_or_else(|| CliError::config("likelihood-check: --energy-ckpt is required"))?;
    let out_dir = args
        .out_dir
        .or(sec.out_dir)
        .ok_or_else(|| CliError::config("likelihood-check: --out-dir is required"))?;
    let scenes_n = args.scenes.or(sec.scenes).unwrap_or(20);
    let k = args.k.or(sec.k).unwrap_or(50);
    let probes = args.hutchinson_probes.or(sec.hutchinson_probes).unwrap_or(0);
    let ode = sec.ode.unwrap_or_default();
    let likelihood_ode = sec.likelihood_ode.unwrap_or(OdeSettings {
        abs_tol: 1e-4,
        rel_tol: 1e-4,
        ..OdeSettings::default()
    });
    violations.check(scenes_n >= 1, "scenes must be at least 1");
    violations.check(k >= 2, "k must be at least 2 to rank");
    violations.check(
        probes == 0 || probes >= 64,
        "hutchinson-probes must be 0 (exact) or at least 64",
    );
    violations.finish()?;

    let resolved = Resolved {
        seed: common.seed,
        dataset: dataset.clone(),
        score_ckpt: score_ckpt.clone(),
        energy_ckpt: energy_ckpt.clone(),
        out_dir: out_dir.clone(),
        scenes: scenes_n,
        k,
        hutchinson_probes: probes,
        ode,
        likelihood_ode,
    };
    write_snapshot(&out_dir, &resolved)?;

    let score = super::load_params(&score_ckpt, Role::Score, "--score-ckpt")?;
    let energy = super::load_params(&energy_ckpt, Role::Energy, "--energy-ckpt")?;
    let mut scenes = super::load_dataset(&dataset)?;
    scenes.truncate(scenes_n);
    if scenes.is_empty() {
        return Err(CliError::Data("dataset has no scenes".into()));
    }
    let schedule = NoiseSchedule::default();
    let seeds = SeedStream::new(common.seed);
    let t0 = Instant::now();
    let mut taus = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let cond = encode_pointcloud(&score, &scene.cloud)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let field = NetScore { params: &score, schedule, cond: cond.clone() };
        let mut rng = seeds.domain_stream(Domain::Eval, i as u64);
        let scene_seed: u64 = rand::Rng::gen(&mut rng);
        let (cands, _) =
            sample_candidates(&field, k, &schedule, &ode.to_config(&schedule), scene_seed)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
        let cond_e = encode_pointcloud(&energy, &scene.cloud)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let mut poses = gpdm::autodiff::Tensor::zeros(cands.len(), 9);
        for (r, c) in cands.candidates.iter().enumerate() {
            poses.data[r * 9..(r + 1) * 9].copy_from_slice(&c.as_vec9());
        }
        let energies =
            energy_forward_batch(&energy, &schedule, &poses, schedule.eps_min(), &cond_e)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
        let div_field = if probes == 0 {
            NetDivergence::exact(&score, schedule, cond)
        } else {
            NetDivergence::hutchinson(&score, schedule, cond, probes, common.seed)
        };
        let lik_cfg = likelihood_ode.to_config(&schedule);
        let log_liks: Vec<f64> = cands
            .candidates
            .iter()
            .map(|c| {
                log_likelihood_ode(&div_field, &c.as_vec9(), &schedule, &lik_cfg)
                    .map(|(l, _)| l)
                    .map_err(|e| CliError::Numerical(e.to_string()))
            })
            .collect::<CliResult<_>>()?;
        let tau = kendall_tau_b(&energies, &log_liks)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        taus.push(tau);
    }
    let mean_tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(out_dir.join("kendall.csv"))
            .map_err(|e| CliError::Data(e.to_string()))?,
    );
    gpdm::eval::write_csv_header(&mut w, "scene,kendall_tau_b")
        .map_err(|e| CliError::Data(e.to_string()))?;
    for (i, tau) in taus.iter().enumerate() {
        writeln!(w, "{i},{tau}").map_err(|e| CliError::Data(e.to_string()))?;
    }
    writeln!(w, "mean,{mean_tau}").map_err(|e| CliError::Data(e.to_string()))?;
    write_telemetry(
        &out_dir,
        &serde_json::json!({
            "stage": "likelihood-check",
            "scenes": taus.len(),
            "wall_seconds": t0.elapsed().as_secs_f64(),
        }),
    )?;
    println!("mean Kendall tau-b over {} scenes: {:.3}", taus.len(), mean_tau);
    Ok(())
}
