//! Isotropic Gaussian-mixture oracles with closed-form perturbed densities.
//!
//! Convolving a mixture `sum w_i N(mu_i, s_i^2 I)` with the VE kernel
//! `N(0, sigma(t)^2 I)` yields another mixture whose component variances are
//! `s_i^2 + sigma(t)^2`, so the perturbed score and log-density are exact.
//! These stand in for the unknown conditional pose distribution whenever a
//! learned component needs an analytic ground truth.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NoiseSchedule;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: Vec<f64>,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmOracle {
    pub dim: usize,
    pub components: Vec<GmmComponent>,
}

impl GmmOracle {
    /// Builds an oracle, normalizing weights to sum to one.
    pub fn new(components: Vec<GmmComponent>) -> Self {
        assert!(!components.is_empty(), "oracle needs at least one component");
        let dim = components[0].mean.len();
        assert!(components.iter().all(|c| c.mean.len() == dim));
        assert!(components.iter().all(|c| c.std > 0.0 && c.weight > 0.0));
        let total: f64 = components.iter().map(|c| c.weight).sum();
        let components = components
            .into_iter()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
        Self { dim, components }
    }

    pub fn single(mean: Vec<f64>, std: f64) -> Self {
        Self::new(vec![GmmComponent { mean, std, weight: 1.0 }])
    }

    /// Per-component log responsibilities at perturbation level sigma.
    fn component_logs(&self, p: &[f64], sigma: f64) -> Vec<f64> {
        let d = self.dim as f64;
        self.components
            .iter()
            .map(|c| {
                let v = c.std * c.std + sigma * sigma;
                let sq: f64 = p
                    .iter()
                    .zip(c.mean.iter())
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum();
                c.weight.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln() - sq / (2.0 * v)
            })
            .collect()
    }

    /// Log-density of the sigma(t)-perturbed mixture, log-sum-exp stabilized.
    pub fn log_density(&self, p: &[f64], t: f64, schedule: &NoiseSchedule) -> f64 {
        assert_eq!(p.len(), self.dim);
        let sigma = schedule.sigma_unchecked(t);
        self.log_density_at_sigma(p, sigma)
    }

    pub fn log_density_at_sigma(&self, p: &[f64], sigma: f64) -> f64 {
        let logs = self.component_logs(p, sigma);
        log_sum_exp(&logs)
    }

    /// Exact score of the perturbed mixture via responsibility-weighted
    /// component scores.
    pub fn perturbed_score(&self, p: &[f64], t: f64, schedule: &NoiseSchedule) -> Vec<f64> {
        assert_eq!(p.len(), self.dim);
        let sigma = schedule.sigma_unchecked(t);
        self.score_at_sigma(p, sigma)
    }

    pub fn score_at_sigma(&self, p: &[f64], sigma: f64) -> Vec<f64> {
        let logs = self.component_logs(p, sigma);
        let lse = log_sum_exp(&logs);
        let mut score = vec![0.0; self.dim];
        for (c, lg) in self.components.iter().zip(&logs) {
            let r = (lg - lse).exp();
            let v = c.std * c.std + sigma * sigma;
            for i in 0..self.dim {
                score[i] += r * (c.mean[i] - p[i]) / v;
            }
        }
        score
    }

    /// Score of the unperturbed data mixture (sigma = 0).
    pub fn data_score(&self, p: &[f64]) -> Vec<f64> {
        self.score_at_sigma(p, 0.0)
    }

    /// Divergence of the perturbed score: with responsibilities `r_i`,
    /// component scores `s_i` and pooled score `s`,
    /// `div = sum_i r_i (||s_i||^2 - D/v_i) - ||s||^2`.
    pub fn score_divergence(&self, p: &[f64], t: f64, schedule: &NoiseSchedule) -> f64 {
        let sigma = schedule.sigma_unchecked(t);
        let logs = self.component_logs(p, sigma);
        let lse = log_sum_exp(&logs);
        let d = self.dim as f64;
        let mut pooled = vec![0.0; self.dim];
        let mut acc = 0.0;
        let mut comp_scores = Vec::with_capacity(self.components.len());
        for (c, lg) in self.components.iter().zip(&logs) {
            let r = (lg - lse).exp();
            let v = c.std * c.std + sigma * sigma;
            let s_i: Vec<f64> = c.mean.iter().zip(p).map(|(m, x)| (m - x) / v).collect();
            for i in 0..self.dim {
                pooled[i] += r * s_i[i];
            }
            comp_scores.push((r, v, s_i));
        }
        for (r, v, s_i) in &comp_scores {
            let sq: f64 = s_i.iter().map(|x| x * x).sum();
            acc += r * (sq - d / v);
        }
        let pooled_sq: f64 = pooled.iter().map(|x| x * x).sum();
        acc - pooled_sq
    }

    /// Draws from the perturbed mixture at level sigma(t); `t = 0` draws
    /// from the data mixture itself.
    pub fn sample<R: Rng>(&self, t: f64, schedule: &NoiseSchedule, rng: &mut R) -> Vec<f64> {
        let sigma = schedule.sigma_unchecked(t);
        self.sample_at_sigma(sigma, rng)
    }

    pub fn sample_at_sigma<R: Rng>(&self, sigma: f64, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            cum += c.weight;
            if u <= cum {
                idx = i;
                break;
            }
        }
        let c = &self.components[idx];
        let sd = (c.std * c.std + sigma * sigma).sqrt();
        (0..self.dim)
            .map(|i| c.mean[i] + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seedstream::SeedStream;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::default()
    }

    #[test]
    fn single_component_score_is_gaussian_score() {
        let mean = vec![0.5, -1.0, 2.0, 0.0, 0.1, -0.2, 0.3, 0.4, -0.5];
        let oracle = GmmOracle::single(mean.clone(), 0.8);
        let p: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let t = 0.4;
        let v = 0.8f64.powi(2) + schedule().sigma(t).unwrap().powi(2);
        let score = oracle.perturbed_score(&p, t, &schedule());
        for i in 0..9 {
            let expect = (mean[i] - p[i]) / v;
            assert!((score[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_midpoint_score_vanishes() {
        let a = GmmComponent { mean: vec![1.0, 0.0], std: 0.5, weight: 1.0 };
        let b = GmmComponent { mean: vec![-1.0, 0.0], std: 0.5, weight: 1.0 };
        let oracle = GmmOracle::new(vec![a, b]);
        let score = oracle.perturbed_score(&[0.0, 0.0], 0.3, &schedule());
        assert!(score.iter().all(|x| x.abs() < 1e-12), "{score:?}");
    }

    #[test]
    fn weights_normalized() {
        let oracle = GmmOracle::new(vec![
            GmmComponent { mean: vec![0.0], std: 1.0, weight: 3.0 },
            GmmComponent { mean: vec![1.0], std: 1.0, weight: 1.0 },
        ]);
        let total: f64 = oracle.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((oracle.components[0].weight - 0.75).abs() < 1e-12);
    }

    #[test]
    fn score_matches_log_density_finite_differences() {
        // 4th-order central stencil; rel tol 1e-6 against the closed form.
        let mut rng = SeedStream::new(31).stream(0);
        let comps = (0..3)
            .map(|_| GmmComponent {
                mean: (0..5).map(|_| rand::Rng::gen_range(&mut rng, -1.5..1.5)).collect(),
                std: rand::Rng::gen_range(&mut rng, 0.4..1.2),
                weight: rand::Rng::gen_range(&mut rng, 0.2..1.0),
            })
            .collect();
        let oracle = GmmOracle::new(comps);
        let sched = schedule();
        for &t in &[0.05, 0.4, 0.9] {
            let p: Vec<f64> = (0..5).map(|_| rand::Rng::gen_range(&mut rng, -2.0..2.0)).collect();
            let score = oracle.perturbed_score(&p, t, &sched);
            let h = 1e-3;
            for i in 0..5 {
                let f = |x: f64| {
                    let mut q = p.clone();
                    q[i] = x;
                    oracle.log_density(&q, t, &sched)
                };
                let fd = (-f(p[i] + 2.0 * h) + 8.0 * f(p[i] + h) - 8.0 * f(p[i] - h)
                    + f(p[i] - 2.0 * h))
                    / (12.0 * h);
                let rel = (score[i] - fd).abs() / fd.abs().max(1e-9);
                assert!(rel < 1e-6, "t={t} dim={i}: {} vs {fd}", score[i]);
            }
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let mut rng = SeedStream::new(32).stream(0);
        let comps = (0..2)
            .map(|_| GmmComponent {
                mean: (0..4).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect(),
                std: rand::Rng::gen_range(&mut rng, 0.5..1.0),
                weight: 1.0,
            })
            .collect();
        let oracle = GmmOracle::new(comps);
        let sched = schedule();
        let p: Vec<f64> = (0..4).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let t = 0.2;
        let div = oracle.score_divergence(&p, t, &sched);
        let h = 1e-5;
        let mut fd = 0.0;
        for i in 0..4 {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[i] += h;
            lo[i] -= h;
            fd += (oracle.perturbed_score(&hi, t, &sched)[i]
                - oracle.perturbed_score(&lo, t, &sched)[i])
                / (2.0 * h);
        }
        assert!((div - fd).abs() / fd.abs().max(1.0) < 1e-6, "{div} vs {fd}");
    }

    #[test]
    fn two_dim_density_integrates_to_one() {
        let oracle = GmmOracle::new(vec![
            GmmComponent { mean: vec![0.6, -0.4], std: 0.7, weight: 0.4 },
            GmmComponent { mean: vec![-0.8, 0.5], std: 0.9, weight: 0.6 },
        ]);
        let sched = schedule();
        let t = 0.3;
        let lim = 9.0;
        let n = 600;
        let step = 2.0 * lim / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let x = -lim + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y = -lim + (j as f64 + 0.5) * step;
                total += oracle.log_density(&[x, y], t, &sched).exp();
            }
        }
        total *= step * step;
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn perturbed_score_converges_to_data_score_at_eps() {
        let oracle = GmmOracle::new(vec![
            GmmComponent { mean: vec![1.0, 0.0, 0.0], std: 0.8, weight: 0.5 },
            GmmComponent { mean: vec![-1.0, 0.5, 0.0], std: 0.6, weight: 0.5 },
        ]);
        let sched = schedule();
        let p = [0.3, -0.2, 0.1];
        let at_eps = oracle.perturbed_score(&p, sched.eps_min(), &sched);
        let data = oracle.data_score(&p);
        for (a, b) in at_eps.iter().zip(&data) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn sampling_matches_moments() {
        let oracle = GmmOracle::single(vec![2.0, -1.0], 0.5);
        let sched = schedule();
        let mut rng = SeedStream::new(33).stream(0);
        let n = 50_000;
        let t = 0.5;
        let v = 0.25 + sched.sigma(t).unwrap().powi(2);
        let mut mean = [0.0f64; 2];
        let mut var = [0.0f64; 2];
        for _ in 0..n {
            let x = oracle.sample(t, &sched, &mut rng);
            mean[0] += x[0];
            mean[1] += x[1];
            var[0] += (x[0] - 2.0) * (x[0] - 2.0);
            var[1] += (x[1] + 1.0) * (x[1] + 1.0);
        }
        for i in 0..2 {
            mean[i] /= n as f64;
            var[i] /= n as f64;
        }
        assert!((mean[0] - 2.0).abs() < 0.02);
        assert!((mean[1] + 1.0).abs() < 0.02);
        assert!((var[0] - v).abs() / v < 0.03);
        assert!((var[1] - v).abs() / v < 0.03);
    }
}
