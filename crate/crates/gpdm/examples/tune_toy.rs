//! Criterion-3 tuning run: DSM on a 2-component 9-D mixture with a fixed
//! condition, scored against the analytic perturbed-mixture oracle.

use gpdm::net::{score_forward_batch, train_score, CondFeature, NetArch, TrainData, TrainExample, TrainingConfig};
use gpdm::sde::{GmmComponent, GmmOracle, NoiseSchedule};
use gpdm::seedstream::{Domain, SeedStream};
use gpdm::autodiff::Tensor;
use std::time::Instant;

fn toy_oracle(spread: f64, s_a: f64, s_b: f64) -> GmmOracle {
    let dir = [0.8, -0.4, 0.5, 0.1, 0.9, -0.6, 0.3, -0.2, 0.4];
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mean_a: Vec<f64> = dir.iter().map(|x| x / n * spread / 2.0).collect();
    let mean_b: Vec<f64> = dir.iter().map(|x| -x / n * spread / 2.0).collect();
    GmmOracle::new(vec![
        GmmComponent { mean: mean_a, std: s_a, weight: 0.55 },
        GmmComponent { mean: mean_b, std: s_b, weight: 0.45 },
    ])
}

fn score_mse(
    params: &gpdm::net::NetParams,
    sched: &NoiseSchedule,
    oracle: &GmmOracle,
    t: f64,
    n: usize,
) -> f64 {
    let seeds = SeedStream::new(999);
    let mut rng = seeds.domain_stream(Domain::Eval, (t * 1e6) as u64);
    let cond = CondFeature::free(params);
    let mut poses = Tensor::zeros(n, 9);
    for r in 0..n {
        let p = oracle.sample(t, sched, &mut rng);
        poses.data[r * 9..(r + 1) * 9].copy_from_slice(&p);
    }
    let pred = score_forward_batch(params, sched, &poses, t, &cond).unwrap();
    let mut acc = 0.0;
    for r in 0..n {
        let truth = oracle.perturbed_score(poses.row(r), t, sched);
        for d in 0..9 {
            let e = pred.get(r, d) - truth[d];
            acc += e * e;
        }
    }
    acc / (9 * n) as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let spread: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.8);
    let s_a: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let s_b: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1.1);
    let steps_arg: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(18000);
    let oracle = toy_oracle(spread, s_a, s_b);
    let sched = NoiseSchedule::default();
    let gen = |rng: &mut rand_chacha::ChaCha8Rng| {
        let v = oracle.sample(0.0, &sched, rng);
        TrainExample { pose: std::array::from_fn(|d| v[d]), cloud: None }
    };
    for (steps, lr, lr_min, batch) in [(steps_arg, 1.2e-3, 1e-5, 256usize)] {
        let cfg = TrainingConfig {
            batch_size: batch,
            steps,
            lr,
            lr_min: Some(lr_min),
            master_seed: 11,
            ..TrainingConfig::default()
        };
        let t0 = Instant::now();
        let out = train_score(TrainData::Generate(&gen), &sched, &NetArch::toy(), &cfg).unwrap();
        let wall = t0.elapsed().as_secs_f64();
        let final_loss = out.loss_curve.last().unwrap().1;
        print!("steps={steps} lr={lr} wall={wall:.0}s loss={final_loss:.3} | mse:");
        for t in [sched.eps_min(), 0.1, 0.5] {
            let mse = score_mse(&out.params, &sched, &oracle, t, 300);
            print!(" t={t:.0e}:{mse:.4}");
        }
        println!();
    }
}
