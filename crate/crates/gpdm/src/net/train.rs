//! Denoising score-matching training for both network roles.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, Tensor, Var};
use crate::sde::{LambdaWeight, NoiseSchedule};
use crate::seedstream::{Domain, SeedStream};

use super::forward::{body_graph, encode_graph, rff_features};
use super::params::quantize_f32;
use super::{NetError, NetParams, PointCloud, Role};

/// One conditioned training record. `cloud = None` means a fixed/free
/// condition (used by the analytic-oracle toys).
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub pose: [f64; 9],
    pub cloud: Option<PointCloud>,
}

/// Where training examples come from: a fixed dataset, or a generator that
/// draws a fresh example per slot (infinite-data regime for the analytic
/// toys, where a fixed set would bias the small-noise score).
#[derive(Clone, Copy)]
pub enum TrainData<'a> {
    Fixed(&'a [TrainExample]),
    Generate(&'a (dyn Fn(&mut rand_chacha::ChaCha8Rng) -> TrainExample + Sync)),
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub batch_size: usize,
    /// Distinct conditions per batch; each is perturbed
    /// `batch_size / scenes_per_batch` times. Ignored for free conditions.
    pub scenes_per_batch: usize,
    pub steps: usize,
    pub lr: f64,
    /// Cosine-decay floor; `None` keeps the rate constant.
    pub lr_min: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; `None` disables.
    pub grad_clip: Option<f64>,
    pub master_seed: u64,
    pub lambda: LambdaWeight,
    /// Snapshot cadence for divergence recovery; 0 keeps only the init.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 192,
            scenes_per_batch: 12,
            steps: 2000,
            lr: 1e-4,
            lr_min: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: None,
            master_seed: 0,
            lambda: LambdaWeight::SigmaSquared,
            checkpoint_every: 500,
        }
    }
}

impl TrainingConfig {
    fn validate(&self, conditioned: bool) -> Result<(), NetError> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(NetError::BadLayout("batch and step counts must be positive"));
        }
        if conditioned
            && (self.scenes_per_batch == 0 || self.batch_size % self.scenes_per_batch != 0)
        {
            return Err(NetError::BadLayout(
                "scenes_per_batch must divide batch_size",
            ));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        match self.lr_min {
            None => self.lr,
            Some(floor) => {
                let frac = step as f64 / self.steps.max(1) as f64;
                let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
                floor + (self.lr - floor) * cos
            }
        }
    }
}

/// Trained parameters plus the per-step loss log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub loss_curve: Vec<(usize, f64)>,
}

/// Divergence report; the last finite snapshot is retained for the caller.
#[derive(Debug)]
pub struct TrainDiverged {
    pub step: usize,
    pub last_finite: NetParams,
    pub loss_curve: Vec<(usize, f64)>,
}

struct Adam {
    m: Vec<(Tensor, Tensor)>,
    v: Vec<(Tensor, Tensor)>,
    step: usize,
}

impl Adam {
    fn new(params: &NetParams) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.rows, t.cols);
        Self {
            m: params.layers.iter().map(|l| (zeros(&l.w), zeros(&l.b))).collect(),
            v: params.layers.iter().map(|l| (zeros(&l.w), zeros(&l.b))).collect(),
            step: 0,
        }
    }

    fn update(
        &mut self,
        params: &mut NetParams,
        grads: &[(Option<Tensor>, Option<Tensor>)],
        cfg: &TrainingConfig,
        lr: f64,
    ) {
        self.step += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let scale = match cfg.grad_clip {
            None => 1.0,
            Some(clip) => {
                let mut sq = 0.0;
                for (gw, gb) in grads {
                    for g in [gw, gb].into_iter().flatten() {
                        sq += g.data.iter().map(|x| x * x).sum::<f64>();
                    }
                }
                let norm = sq.sqrt();
                if norm > clip {
                    clip / norm
                } else {
                    1.0
                }
            }
        };
        for (i, (gw, gb)) in grads.iter().enumerate() {
            let layer = &mut params.layers[i];
            let apply = |p: &mut Tensor, g: &Tensor, m: &mut Tensor, v: &mut Tensor| {
                for k in 0..p.data.len() {
                    let gk = g.data[k] * scale;
                    m.data[k] = b1 * m.data[k] + (1.0 - b1) * gk;
                    v.data[k] = b2 * v.data[k] + (1.0 - b2) * gk * gk;
                    let mhat = m.data[k] / bc1;
                    let vhat = v.data[k] / bc2;
                    p.data[k] -= lr * mhat / (vhat.sqrt() + cfg.adam_eps);
                }
                quantize_f32(p);
            };
            if let Some(g) = gw {
                apply(&mut layer.w, g, &mut self.m[i].0, &mut self.v[i].0);
            }
            if let Some(g) = gb {
                apply(&mut layer.b, g, &mut self.m[i].1, &mut self.v[i].1);
            }
        }
    }
}

struct BatchDraw {
    /// Stacked clouds for the chosen scenes, `(S*N) x 3`, if conditioned.
    stacked: Option<Tensor>,
    scenes: usize,
    /// 0/1 expansion matrix mapping scene features to batch rows.
    expand: Tensor,
    perturbed: Tensor,
    noise: Tensor,
    /// Residual weights c_i = lambda(t_i) / sigma(t_i)^2, tiled to 9 columns.
    weights: Tensor,
    sigmas: Vec<f64>,
    times: Vec<f64>,
}

fn draw_batch(
    data: &TrainData<'_>,
    schedule: &NoiseSchedule,
    cfg: &TrainingConfig,
    conditioned: bool,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> BatchDraw {
    let b = cfg.batch_size;
    let scenes = if conditioned { cfg.scenes_per_batch } else { b };
    let repeats = b / scenes;
    let chosen: Vec<TrainExample> = match data {
        TrainData::Fixed(examples) => (0..scenes)
            .map(|_| examples[rng.gen_range(0..examples.len())].clone())
            .collect(),
        TrainData::Generate(gen) => (0..scenes).map(|_| gen(rng)).collect(),
    };
    let stacked = if conditioned {
        let n = chosen[0].cloud.as_ref().expect("conditioned data").len();
        let mut t = Tensor::zeros(scenes * n, 3);
        for (s, ex) in chosen.iter().enumerate() {
            let cloud = ex.cloud.as_ref().expect("conditioned data");
            assert_eq!(cloud.len(), n, "training clouds must share a point count");
            for (r, p) in cloud.points.iter().enumerate() {
                let base = (s * n + r) * 3;
                t.data[base..base + 3].copy_from_slice(p);
            }
        }
        Some(t)
    } else {
        None
    };
    let mut expand = Tensor::zeros(b, scenes);
    let mut perturbed = Tensor::zeros(b, 9);
    let mut noise = Tensor::zeros(b, 9);
    let mut weights = Tensor::zeros(b, 9);
    let mut sigmas = Vec::with_capacity(b);
    let mut times = Vec::with_capacity(b);
    for e in 0..b {
        let scene = e / repeats;
        expand.set(e, scene, 1.0);
        let pose = chosen[scene].pose;
        let t = schedule.sample_train_time(rng);
        let sigma = schedule.sigma_unchecked(t);
        let c = schedule.lambda(t, cfg.lambda) / (sigma * sigma);
        for d in 0..9 {
            let z: f64 = rng.sample(StandardNormal);
            perturbed.set(e, d, pose[d] + sigma * z);
            noise.set(e, d, z);
            weights.set(e, d, c);
        }
        sigmas.push(sigma);
        times.push(t);
    }
    BatchDraw { stacked, scenes, expand, perturbed, noise, weights, sigmas, times }
}

/// Builds the batch condition matrix (B x feat) inside the graph.
fn cond_graph(
    g: &mut Graph,
    params: &NetParams,
    vars: &super::params::NetVars,
    batch: &BatchDraw,
    b: usize,
) -> Var {
    match &batch.stacked {
        Some(stacked) => {
            let sv = g.constant(stacked.clone());
            let feats = encode_graph(g, params, vars, sv, batch.scenes);
            let ev = g.constant(batch.expand.clone());
            g.matmul(ev, feats)
        }
        None => g.constant(Tensor::zeros(b, params.arch.feature_dim())),
    }
}

fn run_training(
    role: Role,
    init: NetParams,
    data: &TrainData<'_>,
    schedule: &NoiseSchedule,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome, Box<TrainDiverged>> {
    let conditioned = match data {
        TrainData::Fixed(examples) => {
            assert!(!examples.is_empty(), "training data must be non-empty");
            let c = examples[0].cloud.is_some();
            assert!(
                examples.iter().all(|d| d.cloud.is_some() == c),
                "mixed conditioned/free datasets are not supported"
            );
            c
        }
        TrainData::Generate(gen) => {
            let mut probe = SeedStream::new(cfg.master_seed)
                .domain_stream(Domain::TrainStep, u64::MAX);
            gen(&mut probe).cloud.is_some()
        }
    };
    cfg.validate(conditioned).expect("training config");
    let seeds = SeedStream::new(cfg.master_seed);
    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut snapshot = params.clone();
    let mut snapshot_step = 0usize;
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    let b = cfg.batch_size;
    for step in 0..cfg.steps {
        let mut rng =
            seeds.domain_stream(Domain::TrainStep, (step as u64) << 1 | role.as_byte() as u64);
        let batch = draw_batch(data, schedule, cfg, conditioned, &mut rng);
        let mut g = Graph::new();
        let vars = params.insert(&mut g, true);
        let cond = cond_graph(&mut g, &params, &vars, &batch, b);
        let tf = g.constant(rff_features(&params.fourier_freqs, &batch.times));
        let weights = g.constant(batch.weights.clone());
        let noise = g.constant(batch.noise.clone());
        let gates: Vec<f64> =
            batch.sigmas.iter().map(|&s| super::forward::out_gate(s)).collect();
        let loss = match role {
            Role::Score => {
                let poses = g.constant(batch.perturbed.clone());
                let raw = body_graph(&mut g, &params, &vars, poses, tf, cond, &gates);
                // raw regresses onto -z: residual = raw + z
                let resid = g.add(raw, noise);
                let sq = g.mul(resid, resid);
                let wsq = g.mul(sq, weights);
                let tot = g.sum_all(wsq);
                g.scale(tot, 1.0 / b as f64)
            }
            Role::Energy => {
                let poses = g.leaf(batch.perturbed.clone());
                let raw = body_graph(&mut g, &params, &vars, poses, tf, cond, &gates);
                let prod = g.mul(poses, raw);
                let dots = g.sum_cols(prod);
                let inv_sigma = g.constant(Tensor::from_vec(
                    b,
                    1,
                    batch.sigmas.iter().map(|s| 1.0 / s).collect(),
                ));
                let psi = g.mul(dots, inv_sigma);
                let psi_sum = g.sum_all(psi);
                // rows are independent, so d(sum psi)/d poses stacks the
                // per-sample input gradients
                let gp = g.backward(psi_sum, &[poses])[0].expect("poses reach psi");
                let sigma_mat = {
                    let mut t = Tensor::zeros(b, 9);
                    for r in 0..b {
                        for c in 0..9 {
                            t.set(r, c, batch.sigmas[r]);
                        }
                    }
                    g.constant(t)
                };
                // sigma * grad psi regresses onto -z
                let scaled = g.mul(gp, sigma_mat);
                let resid = g.add(scaled, noise);
                let sq = g.mul(resid, resid);
                let wsq = g.mul(sq, weights);
                let tot = g.sum_all(wsq);
                g.scale(tot, 1.0 / b as f64)
            }
        };
        let loss_val = g.value(loss).data[0];
        if !loss_val.is_finite() {
            return Err(Box::new(TrainDiverged {
                step,
                last_finite: snapshot,
                loss_curve,
            }));
        }
        let wrt: Vec<Var> = vars
            .layers
            .iter()
            .flat_map(|&(w, bv)| [w, bv])
            .collect();
        let grads = g.backward(loss, &wrt);
        let mut grad_pairs = Vec::with_capacity(params.layers.len());
        let mut finite = true;
        for pair in grads.chunks(2) {
            let gw = pair[0].map(|v| g.value(v).clone());
            let gb = pair[1].map(|v| g.value(v).clone());
            finite &= gw.as_ref().map_or(true, Tensor::is_finite)
                && gb.as_ref().map_or(true, Tensor::is_finite);
            grad_pairs.push((gw, gb));
        }
        if !finite {
            return Err(Box::new(TrainDiverged {
                step,
                last_finite: snapshot,
                loss_curve,
            }));
        }
        adam.update(&mut params, &grad_pairs, cfg, cfg.lr_at(step));
        loss_curve.push((step, loss_val));
        if cfg.checkpoint_every > 0
            && (step + 1) % cfg.checkpoint_every == 0
            && params.is_finite()
        {
            snapshot = params.clone();
            snapshot_step = step + 1;
        }
    }
    let _ = snapshot_step;
    Ok(TrainOutcome { params, loss_curve })
}

/// Trains a score network from scratch.
pub fn train_score(
    data: TrainData<'_>,
    schedule: &NoiseSchedule,
    arch: &super::NetArch,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome, Box<TrainDiverged>> {
    let init = super::init_params(arch, Role::Score, cfg.master_seed);
    run_training(Role::Score, init, &data, schedule, cfg)
}

/// Trains an energy network warm-started from a trained score network.
///
/// The regressed quantity is the energy's input gradient, so each step
/// differentiates through the first backward pass.
pub fn train_energy(
    data: TrainData<'_>,
    schedule: &NoiseSchedule,
    init_from: &NetParams,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome, Box<TrainDiverged>> {
    let mut init = init_from.clone();
    init.role = Role::Energy;
    run_training(Role::Energy, init, &data, schedule, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetArch;
    use crate::sde::GmmOracle;

    fn toy_data(n: usize, seed: u64) -> (Vec<TrainExample>, GmmOracle) {
        let oracle = GmmOracle::single(
            vec![0.5, -0.3, 0.8, 0.0, 0.2, -0.6, 0.4, -0.1, 0.3],
            0.7,
        );
        let seeds = SeedStream::new(seed);
        let sched = NoiseSchedule::default();
        let data = (0..n)
            .map(|i| {
                let mut rng = seeds.domain_stream(Domain::DataGen, i as u64);
                let v = oracle.sample(0.0, &sched, &mut rng);
                TrainExample { pose: std::array::from_fn(|d| v[d]), cloud: None }
            })
            .collect();
        (data, oracle)
    }

    #[test]
    fn score_training_decreases_loss_and_is_deterministic() {
        let (data, _) = toy_data(512, 40);
        let sched = NoiseSchedule::default();
        let cfg = TrainingConfig {
            batch_size: 64,
            steps: 60,
            lr: 1e-3,
            master_seed: 7,
            ..TrainingConfig::default()
        };
        let out1 = train_score(TrainData::Fixed(&data), &sched, &NetArch::tiny(), &cfg).unwrap();
        let out2 = train_score(TrainData::Fixed(&data), &sched, &NetArch::tiny(), &cfg).unwrap();
        assert_eq!(out1.loss_curve, out2.loss_curve, "replay must be identical");
        let head: f64 = out1.loss_curve[..6].iter().map(|(_, l)| l).sum::<f64>() / 6.0;
        let tail: f64 =
            out1.loss_curve[54..].iter().map(|(_, l)| l).sum::<f64>() / 6.0;
        assert!(tail < head, "loss should fall: {head} -> {tail}");
    }

    #[test]
    fn energy_training_runs_and_decreases_loss() {
        let (data, _) = toy_data(256, 41);
        let sched = NoiseSchedule::default();
        let cfg = TrainingConfig {
            batch_size: 32,
            steps: 50,
            lr: 1e-3,
            master_seed: 8,
            ..TrainingConfig::default()
        };
        let score = train_score(TrainData::Fixed(&data), &sched, &NetArch::tiny(), &cfg).unwrap();
        let energy = train_energy(TrainData::Fixed(&data), &sched, &score.params, &cfg).unwrap();
        assert_eq!(energy.params.role, Role::Energy);
        let head: f64 = energy.loss_curve[..5].iter().map(|(_, l)| l).sum::<f64>() / 5.0;
        let tail: f64 =
            energy.loss_curve[45..].iter().map(|(_, l)| l).sum::<f64>() / 5.0;
        assert!(tail < head, "energy loss should fall: {head} -> {tail}");
    }
}
