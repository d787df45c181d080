//! Ablation grids over candidate count K and keep-fraction delta, plus the
//! ranking-mode comparison table.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{best_of_k, filter_and_aggregate, rank_candidates, AggregationConfig, RankingMode};
use crate::net::{encode_pointcloud, energy_forward_batch, NetParams};
use crate::sampler::{sample_candidates, CandidateSet, NetScore, OdeConfig};
use crate::sde::NoiseSchedule;
use crate::seedstream::{Domain, SeedStream};
use crate::synth::{SceneSample, METERS_PER_UNIT};

use super::metrics::{accuracy_at, MetricThreshold, PoseResult};
use super::EvalError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub ks: Vec<usize>,
    pub deltas: Vec<f64>,
    /// `acc[i][j]` = accuracy at 10 deg / 2 cm for `(ks[i], deltas[j])`.
    pub acc: Vec<Vec<f64>>,
    pub scenes: usize,
}

impl AblationTable {
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = format!(
            "k,{}",
            self.deltas
                .iter()
                .map(|d| format!("delta_{d}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        super::write_csv_header(&mut w, &header)?;
        for (i, k) in self.ks.iter().enumerate() {
            let row = self.acc[i]
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(w, "{k},{row}")?;
        }
        Ok(())
    }
}

/// Samples one nested candidate set per scene (size `max(ks)`), then scores
/// every `(K, delta)` cell on shared prefixes: smaller K reuses the first K
/// trajectories and all deltas share one ranked list per K.
pub fn ablation_grid(
    scenes: &[SceneSample],
    score: &NetParams,
    energy: &NetParams,
    schedule: &NoiseSchedule,
    ode: &OdeConfig,
    ks: &[usize],
    deltas: &[f64],
    master_seed: u64,
) -> Result<AblationTable, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let k_max = *ks.iter().max().expect("non-empty ks");
    let seeds = SeedStream::new(master_seed);
    // per scene: candidates + energies, sampled once
    let per_scene: Result<Vec<(CandidateSet, Vec<f64>)>, EvalError> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let cond = encode_pointcloud(score, &scene.cloud).map_err(to_eval)?;
            let field = NetScore { params: score, schedule: *schedule, cond };
            let seed = seeds.domain_stream(Domain::Eval, i as u64).get_stream();
            let (cands, _) = sample_candidates(&field, k_max, schedule, ode, seed)
                .map_err(|e| EvalError::Estimator(e.into()))?;
            let cond_e = encode_pointcloud(energy, &scene.cloud).map_err(to_eval)?;
            let mut poses = crate::autodiff::Tensor::zeros(cands.len(), 9);
            for (r, c) in cands.candidates.iter().enumerate() {
                poses.data[r * 9..(r + 1) * 9].copy_from_slice(&c.as_vec9());
            }
            let energies =
                energy_forward_batch(energy, schedule, &poses, schedule.eps_min(), &cond_e)
                    .map_err(to_eval)?;
            Ok((cands, energies))
        })
        .collect();
    let per_scene = per_scene?;
    let th = MetricThreshold { rot_deg: 10.0, trans_cm: 2.0 };
    let mut acc = vec![vec![0.0; deltas.len()]; ks.len()];
    for (ki, &k) in ks.iter().enumerate() {
        for (di, &delta) in deltas.iter().enumerate() {
            let cfg = AggregationConfig { k, delta, ranking: RankingMode::Energy };
            let mut results = Vec::with_capacity(scenes.len());
            for (scene, (cands, energies)) in scenes.iter().zip(&per_scene) {
                let prefix = CandidateSet {
                    candidates: cands.candidates[..k].to_vec(),
                    energies: None,
                    ranking: None,
                };
                let (ranked, _) = rank_candidates(prefix, energies[..k].to_vec());
                let pred = filter_and_aggregate(&ranked, &cfg)?;
                results.push(PoseResult {
                    pred,
                    gt: scene.gt_pose,
                    sym: scene.symmetry.clone(),
                    category: scene.category,
                });
            }
            acc[ki][di] = accuracy_at(&results, &th)?;
        }
    }
    Ok(AblationTable { ks: ks.to_vec(), deltas: deltas.to_vec(), acc, scenes: scenes.len() })
}

fn to_eval(e: crate::net::NetError) -> EvalError {
    EvalError::Estimator(e.into())
}

/// Table-3-style ranking comparison on shared candidate sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingComparison {
    /// Rows: (label, accuracy per standard threshold).
    pub rows: Vec<(String, Vec<f64>)>,
    pub scenes: usize,
}

impl RankingComparison {
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = format!(
            "ranking,{}",
            MetricThreshold::STANDARD
                .iter()
                .map(|t| format!("acc_{}", t.label()))
                .collect::<Vec<_>>()
                .join(",")
        );
        super::write_csv_header(&mut w, &header)?;
        for (label, vals) in &self.rows {
            writeln!(
                w,
                "{label},{}",
                vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            )?;
        }
        Ok(())
    }
}

/// Compares random-single, random + pooling, energy + pooling, and
/// GT-oracle + pooling on identical candidate sets.
pub fn ranking_comparison(
    scenes: &[SceneSample],
    score: &NetParams,
    energy: &NetParams,
    schedule: &NoiseSchedule,
    ode: &OdeConfig,
    agg: &AggregationConfig,
    master_seed: u64,
) -> Result<RankingComparison, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let seeds = SeedStream::new(master_seed);
    let per_scene: Result<Vec<(PoseResult, PoseResult, PoseResult, PoseResult)>, EvalError> =
        scenes
            .par_iter()
            .enumerate()
            .map(|(i, scene)| {
                let cond = encode_pointcloud(score, &scene.cloud).map_err(to_eval)?;
                let field = NetScore { params: score, schedule: *schedule, cond };
                let seed = seeds.domain_stream(Domain::Eval, i as u64).get_stream();
                let (cands, _) = sample_candidates(&field, agg.k, schedule, ode, seed)
                    .map_err(|e| EvalError::Estimator(e.into()))?;
                let cond_e = encode_pointcloud(energy, &scene.cloud).map_err(to_eval)?;
                let mut poses = crate::autodiff::Tensor::zeros(cands.len(), 9);
                for (r, c) in cands.candidates.iter().enumerate() {
                    poses.data[r * 9..(r + 1) * 9].copy_from_slice(&c.as_vec9());
                }
                let energies =
                    energy_forward_batch(energy, schedule, &poses, schedule.eps_min(), &cond_e)
                        .map_err(to_eval)?;
                let wrap = |pred: crate::geometry::Pose9D| PoseResult {
                    pred,
                    gt: scene.gt_pose,
                    sym: scene.symmetry.clone(),
                    category: scene.category,
                };
                // random single candidate
                let mut rng = seeds.domain_stream(Domain::Eval, (i as u64) | (1 << 40));
                let pick = rand::Rng::gen_range(&mut rng, 0..cands.len());
                let random_single = wrap(cands.candidates[pick]);
                // random ranking + pooling
                let mut order: Vec<usize> = (0..cands.len()).collect();
                rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
                let shuffled = CandidateSet {
                    candidates: cands.candidates.clone(),
                    energies: Some(vec![0.0; cands.len()]),
                    ranking: Some(order),
                };
                let random_pool = wrap(filter_and_aggregate(&shuffled, agg)?);
                // energy ranking + pooling
                let (ranked, _) = rank_candidates(
                    CandidateSet {
                        candidates: cands.candidates.clone(),
                        energies: None,
                        ranking: None,
                    },
                    energies,
                );
                let energy_pool = wrap(filter_and_aggregate(&ranked, agg)?);
                // GT-oracle ranking + pooling
                let dists: Vec<f64> = cands
                    .candidates
                    .iter()
                    .map(|c| {
                        crate::estimator::pose_distance_deg_cm(
                            c,
                            &scene.gt_pose,
                            &scene.symmetry,
                            METERS_PER_UNIT,
                        )
                        .map(|d| -d)
                    })
                    .collect::<Result<_, _>>()?;
                let (gt_ranked, _) = rank_candidates(cands, dists);
                let gt_pool = wrap(filter_and_aggregate(&gt_ranked, agg)?);
                Ok((random_single, random_pool, energy_pool, gt_pool))
            })
            .collect();
    let per_scene = per_scene?;
    let columns = |f: &dyn Fn(&(PoseResult, PoseResult, PoseResult, PoseResult)) -> PoseResult| {
        let results: Vec<PoseResult> = per_scene.iter().map(f).collect();
        MetricThreshold::STANDARD
            .iter()
            .map(|th| accuracy_at(&results, th))
            .collect::<Result<Vec<f64>, _>>()
    };
    let rows = vec![
        ("random-single".to_string(), columns(&|t| t.0.clone())?),
        ("random-pool".to_string(), columns(&|t| t.1.clone())?),
        ("energy-pool".to_string(), columns(&|t| t.2.clone())?),
        ("gt-pool".to_string(), columns(&|t| t.3.clone())?),
    ];
    Ok(RankingComparison { rows, scenes: scenes.len() })
}

/// Nested best-of-K evaluation used by trend tests: errors of the candidate
/// nearest ground truth among the first `k` of a shared set.
pub fn best_of_k_errors(
    scenes: &[SceneSample],
    candidate_sets: &[CandidateSet],
    k: usize,
) -> Result<Vec<PoseResult>, EvalError> {
    scenes
        .iter()
        .zip(candidate_sets)
        .map(|(scene, cands)| {
            let prefix = CandidateSet {
                candidates: cands.candidates[..k.min(cands.len())].to_vec(),
                energies: None,
                ranking: None,
            };
            let pred = best_of_k(&prefix, &scene.gt_pose, &scene.symmetry, METERS_PER_UNIT)?;
            Ok(PoseResult {
                pred,
                gt: scene.gt_pose,
                sym: scene.symmetry.clone(),
                category: scene.category,
            })
        })
        .collect()
}

trait StreamSeed {
    fn get_stream(self) -> u64;
}

impl StreamSeed for rand_chacha::ChaCha8Rng {
    fn get_stream(mut self) -> u64 {
        // derive a child seed for the sampler from this stream
        rand::Rng::gen(&mut self)
    }
}
