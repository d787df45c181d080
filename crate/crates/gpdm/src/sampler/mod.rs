//! Probability-flow ODE sampling and the divergence-integral likelihood.
//!
//! Sampling integrates `dp/dt = -sigma(t) sigma'(t) * score(p, t | O)` from
//! `t = 1` (pure noise, `p(1) ~ N(0, sigma_max^2 I)`) down to `t = eps`.
//! Tracking warm-starts the same ODE at `t = 0.1` around the previous
//! estimate. The likelihood oracle integrates the augmented
//! (state, divergence) system in the opposite direction.

mod candidates;
mod likelihood;
mod ode;

pub use candidates::{sample_candidates, sample_candidates_warm, CandidateSet};
pub use likelihood::{log_likelihood_ode, DivergenceField, GmmDivergence, NetDivergence};
pub use ode::{euler_fixed, rk45_adaptive, OdeConfig, OdeMethod, StepStats};

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::net::{score_forward_batch, CondFeature, NetParams};
use crate::sde::{GmmOracle, NoiseSchedule};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("adaptive step underflow at t={t:.6e} (|h|={h:.3e}, worst trajectory {worst})")]
    OdeStepUnderflow { t: f64, h: f64, worst: usize },
    #[error("step limit exceeded ({0} steps)")]
    StepLimit(usize),
    #[error("non-finite state or divergence at t={t:.6e}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error("invalid config: {0}")]
    Config(&'static str),
}

/// A conditioned score field `(p, t) -> grad_p log p_t(p | O)`, evaluated on
/// a batch of poses at a shared time.
pub trait ScoreField: Sync {
    fn score_batch(&self, poses: &Tensor, t: f64) -> Tensor;

    fn score_one(&self, pose: &[f64; 9], t: f64) -> [f64; 9] {
        let out = self.score_batch(&Tensor::from_vec(1, 9, pose.to_vec()), t);
        std::array::from_fn(|i| out.data[i])
    }
}

/// Analytic field backed by a 9-D Gaussian-mixture oracle.
pub struct GmmScore<'a> {
    pub oracle: &'a GmmOracle,
    pub schedule: NoiseSchedule,
}

impl ScoreField for GmmScore<'_> {
    fn score_batch(&self, poses: &Tensor, t: f64) -> Tensor {
        let mut out = Tensor::zeros(poses.rows, poses.cols);
        for r in 0..poses.rows {
            let s = self.oracle.perturbed_score(poses.row(r), t, &self.schedule);
            out.data[r * poses.cols..(r + 1) * poses.cols].copy_from_slice(&s);
        }
        out
    }
}

/// Learned field: a trained score network conditioned on one encoded cloud.
pub struct NetScore<'a> {
    pub params: &'a NetParams,
    pub schedule: NoiseSchedule,
    pub cond: CondFeature,
}

impl ScoreField for NetScore<'_> {
    fn score_batch(&self, poses: &Tensor, t: f64) -> Tensor {
        // Stage times can round a hair outside the trained range.
        let t = t.clamp(self.schedule.eps_min(), 1.0);
        score_forward_batch(self.params, &self.schedule, poses, t, &self.cond)
            .expect("finite score")
    }
}

/// The null field; the ODE leaves states untouched.
pub struct ZeroScore;

impl ScoreField for ZeroScore {
    fn score_batch(&self, poses: &Tensor, _t: f64) -> Tensor {
        Tensor::zeros(poses.rows, poses.cols)
    }
}

/// Drift of the probability-flow ODE: `-sigma(t) sigma'(t) * score`.
pub(crate) fn pf_drift(
    field: &dyn ScoreField,
    schedule: &NoiseSchedule,
    poses: &Tensor,
    t: f64,
) -> Tensor {
    let rate = schedule.sigma_sq_rate_unchecked(t);
    field.score_batch(poses, t).scale(-rate)
}
