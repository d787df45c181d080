//! Variance-exploding noise schedule, perturbation kernel, denoising
//! score-matching targets, and closed-form Gaussian-mixture oracles.
//!
//! The forward process perturbs a clean pose `p(0)` to
//! `p(t) = p(0) + sigma(t) z` with `sigma(t) = sigma_min (sigma_max/sigma_min)^t`.
//! The DSM regression target at `(p(t), t)` is `(p(0) - p(t)) / sigma(t)^2`,
//! whose population minimizer is the score of the perturbed marginal.

mod gmm;
mod schedule;

pub use gmm::{GmmComponent, GmmOracle};
pub use schedule::{NoiseSchedule, DEFAULT_EPS_MIN, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose9D;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("diffusion time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
}

/// Weighting lambda(t) applied to the DSM residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaWeight {
    /// lambda(t) = sigma(t)^2; makes the weighted target unit-variance.
    #[default]
    SigmaSquared,
    /// Unweighted residual; exposed for sensitivity sweeps.
    One,
}

/// One training example for denoising score matching.
#[derive(Debug, Clone)]
pub struct DsmTarget {
    pub perturbed_pose: Pose9D,
    pub target_score: [f64; 9],
    pub t: f64,
    pub weight: f64,
}

impl DsmTarget {
    /// Reconstructs the clean pose: `p(t) + sigma(t)^2 * target = p(0)`.
    pub fn reconstruct_clean(&self, schedule: &NoiseSchedule) -> [f64; 9] {
        let sigma2 = schedule.sigma_unchecked(self.t).powi(2);
        let p = self.perturbed_pose.as_vec9();
        std::array::from_fn(|i| p[i] + sigma2 * self.target_score[i])
    }
}

impl NoiseSchedule {
    /// Draws `p(t) = p0 + sigma(t) z` and the matching score target `-z/sigma(t)`.
    pub fn perturb<R: Rng>(
        &self,
        p0: &Pose9D,
        t: f64,
        lambda: LambdaWeight,
        rng: &mut R,
    ) -> Result<DsmTarget, SdeError> {
        self.check_train_time(t)?;
        let sigma = self.sigma_unchecked(t);
        let clean = p0.as_vec9();
        let mut perturbed = [0.0; 9];
        let mut target = [0.0; 9];
        for i in 0..9 {
            let z: f64 = rng.sample(StandardNormal);
            perturbed[i] = clean[i] + sigma * z;
            target[i] = -z / sigma;
        }
        Ok(DsmTarget {
            perturbed_pose: Pose9D::from_vec9(&perturbed),
            target_score: target,
            t,
            weight: self.lambda(t, lambda),
        })
    }

    pub fn lambda(&self, t: f64, lambda: LambdaWeight) -> f64 {
        match lambda {
            LambdaWeight::SigmaSquared => self.sigma_unchecked(t).powi(2),
            LambdaWeight::One => 1.0,
        }
    }

    /// Uniform draw of a training time on `[eps_min, 1]`.
    pub fn sample_train_time<R: Rng>(&self, rng: &mut R) -> f64 {
        rng.gen_range(self.eps_min()..=1.0)
    }
}

/// Weighted squared residual `lambda(t) ||score_out - target||^2`.
pub fn dsm_loss(score_out: &[f64; 9], target: &DsmTarget) -> f64 {
    let mut s = 0.0;
    for i in 0..9 {
        let d = score_out[i] - target.target_score[i];
        s += d * d;
    }
    target.weight * s
}

/// Gradient of `dsm_loss` with respect to `score_out`.
pub fn dsm_loss_grad(score_out: &[f64; 9], target: &DsmTarget) -> [f64; 9] {
    std::array::from_fn(|i| 2.0 * target.weight * (score_out[i] - target.target_score[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seedstream::SeedStream;

    #[test]
    fn perturb_matches_fixed_noise_algebra() {
        let sched = NoiseSchedule::default();
        let p0 = Pose9D::identity();
        let mut rng = SeedStream::new(3).stream(0);
        let tgt = sched.perturb(&p0, 0.37, LambdaWeight::SigmaSquared, &mut rng).unwrap();
        // target = (p0 - p(t)) / sigma^2 must hold exactly by construction.
        let sigma = sched.sigma(0.37).unwrap();
        let clean = p0.as_vec9();
        let pt = tgt.perturbed_pose.as_vec9();
        for i in 0..9 {
            let expect = (clean[i] - pt[i]) / (sigma * sigma);
            assert!((tgt.target_score[i] - expect).abs() < 1e-12);
        }
        // and the clean pose reconstructs exactly
        let rec = tgt.reconstruct_clean(&sched);
        for i in 0..9 {
            assert!((rec[i] - clean[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn perturb_variance_monte_carlo() {
        let sched = NoiseSchedule::default();
        let p0 = Pose9D::identity();
        let t = 0.5;
        let sigma2 = sched.sigma(t).unwrap().powi(2);
        let n = 100_000;
        let mut rng = SeedStream::new(8).stream(1);
        let mut sums = [0.0f64; 9];
        let mut sq = [0.0f64; 9];
        for _ in 0..n {
            let tgt = sched.perturb(&p0, t, LambdaWeight::SigmaSquared, &mut rng).unwrap();
            let d = tgt.perturbed_pose.as_vec9();
            let c = p0.as_vec9();
            for i in 0..9 {
                let x = d[i] - c[i];
                sums[i] += x;
                sq[i] += x * x;
            }
        }
        for i in 0..9 {
            let mean = sums[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(
                (var - sigma2).abs() / sigma2 < 0.02,
                "dim {i}: var {var} vs {sigma2}"
            );
        }
    }

    #[test]
    fn perturb_norm_at_eps() {
        // ||p(eps) - p0|| has mean sigma(eps) * E||z||, z 9-dim standard normal.
        let sched = NoiseSchedule::default();
        let p0 = Pose9D::identity();
        let t = sched.eps_min();
        let n = 100_000;
        let mut rng = SeedStream::new(12).stream(0);
        let mut acc = 0.0;
        for _ in 0..n {
            let tgt = sched.perturb(&p0, t, LambdaWeight::SigmaSquared, &mut rng).unwrap();
            let d = tgt.perturbed_pose.as_vec9();
            let c = p0.as_vec9();
            let norm: f64 = (0..9).map(|i| (d[i] - c[i]).powi(2)).sum::<f64>().sqrt();
            acc += norm;
        }
        let got = acc / n as f64;
        // chi(9) mean = sqrt(2) Gamma(5)/Gamma(4.5) = 2.9180...
        let chi9_mean = 2.9179778245;
        let expect = sched.sigma(t).unwrap() * chi9_mean;
        assert!((got - expect).abs() / expect < 0.05, "{got} vs {expect}");
        // the spec-level sanity figure: roughly sigma(eps) * 3
        assert!((got - sched.sigma(t).unwrap() * 3.0).abs() / got < 0.1);
    }

    #[test]
    fn dsm_loss_basics() {
        let sched = NoiseSchedule::default();
        let mut rng = SeedStream::new(4).stream(0);
        let tgt = sched
            .perturb(&Pose9D::identity(), 0.6, LambdaWeight::SigmaSquared, &mut rng)
            .unwrap();
        assert_eq!(dsm_loss(&tgt.target_score, &tgt), 0.0);
        // unit offset in one coordinate costs exactly lambda(t)
        let mut off = tgt.target_score;
        off[0] += 1.0;
        let loss = dsm_loss(&off, &tgt);
        assert!((loss - tgt.weight).abs() < 1e-12);
        let sigma2 = sched.sigma(0.6).unwrap().powi(2);
        assert!((tgt.weight - sigma2).abs() < 1e-12);
    }

    #[test]
    fn dsm_loss_grad_matches_finite_differences() {
        let sched = NoiseSchedule::default();
        let mut rng = SeedStream::new(5).stream(0);
        let tgt = sched
            .perturb(&Pose9D::identity(), 0.25, LambdaWeight::SigmaSquared, &mut rng)
            .unwrap();
        let x: [f64; 9] = std::array::from_fn(|i| 0.3 * i as f64 - 1.0);
        let g = dsm_loss_grad(&x, &tgt);
        let h = 1e-6;
        for i in 0..9 {
            let mut hi = x;
            let mut lo = x;
            hi[i] += h;
            lo[i] -= h;
            let fd = (dsm_loss(&hi, &tgt) - dsm_loss(&lo, &tgt)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-5, "dim {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn perturb_rejects_time_below_eps() {
        let sched = NoiseSchedule::default();
        let mut rng = SeedStream::new(6).stream(0);
        assert!(sched
            .perturb(&Pose9D::identity(), 1e-9, LambdaWeight::One, &mut rng)
            .is_err());
    }
}
