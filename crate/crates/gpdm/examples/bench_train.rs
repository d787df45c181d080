//! Rough training-step timing at desk scale. Run with
//! `cargo run --release -p gpdm --example bench_train`.

use gpdm::net::{train_energy, train_score, NetArch, PointCloud, TrainData, TrainExample, TrainingConfig};
use gpdm::sde::NoiseSchedule;
use gpdm::seedstream::SeedStream;
use rand::Rng;
use std::time::Instant;

fn main() {
    let seeds = SeedStream::new(1);
    let n_points = 256;
    let data: Vec<TrainExample> = (0..64)
        .map(|i| {
            let mut rng = seeds.stream(i);
            let cloud = PointCloud::new(
                (0..n_points)
                    .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                    .collect(),
            )
            .unwrap();
            TrainExample {
                pose: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                cloud: Some(cloud),
            }
        })
        .collect();
    let sched = NoiseSchedule::default();
    let arch = NetArch::default();
    println!("params: {}", arch.param_count());

    for (batch, scenes, steps) in [(128usize, 8usize, 10usize), (192, 12, 10)] {
        let cfg = TrainingConfig {
            batch_size: batch,
            scenes_per_batch: scenes,
            steps,
            master_seed: 3,
            ..TrainingConfig::default()
        };
        let t0 = Instant::now();
        let out = train_score(TrainData::Fixed(&data), &sched, &arch, &cfg).unwrap();
        let dt = t0.elapsed().as_secs_f64() / steps as f64;
        println!(
            "score  batch={batch} scenes={scenes}: {dt:.3}s/step (last loss {:.3})",
            out.loss_curve.last().unwrap().1
        );
        let t0 = Instant::now();
        let _ = train_energy(TrainData::Fixed(&data), &sched, &out.params, &cfg).unwrap();
        let dt = t0.elapsed().as_secs_f64() / steps as f64;
        println!("energy batch={batch} scenes={scenes}: {dt:.3}s/step");
    }
}
