//! Score network and energy network over pose, time, and point-cloud
//! condition, built on the [`crate::autodiff`] tape.
//!
//! Both networks share one architecture: a permutation-invariant point
//! encoder (per-point MLP + column max-pool), a pose embedding, a frozen
//! random-Fourier time embedding with a trained projection, a fused trunk,
//! and three parallel head stacks for Rx, Ry, and T. The raw heads predict
//! the unit-variance quantity `-z`; dividing by `sigma(t)` turns that into
//! a score, which keeps head outputs O(1) across four decades of noise.
//!
//! The energy network reuses the same 9-vector body `Phi_phi` and defines
//! `Psi(p, t | O) = <p, Phi_phi(p, t | O)>`; its input gradient is produced
//! by the tape and is itself differentiable, which is what energy training
//! optimizes through (double backward).

mod arch;
mod checkpoint;
mod forward;
mod params;
mod train;

pub use arch::NetArch;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    encode_pointcloud, encode_pointclouds, energy_forward, energy_forward_batch,
    energy_input_gradient, score_forward, score_forward_batch, score_hutchinson_divergence,
    score_jacobian_trace,
    CondFeature,
};
pub use params::{init_params, NetParams, Role};
pub use train::{
    train_energy, train_score, TrainData, TrainDiverged, TrainExample, TrainOutcome,
    TrainingConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite activation in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at step {step}; last finite checkpoint retained")]
    Diverged { step: usize },
    #[error("point cloud invalid: {0}")]
    BadPointCloud(&'static str),
    #[error("checkpoint magic mismatch (expected GPDM)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated or size mismatch: {0}")]
    BadLayout(&'static str),
    #[error("diffusion time out of range: {0}")]
    Time(#[from] crate::sde::SdeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Observed points in normalized scene units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, NetError> {
        let pc = Self { points };
        pc.validate()?;
        Ok(pc)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.points.len() < 16 {
            return Err(NetError::BadPointCloud("fewer than 16 points"));
        }
        if !self.points.iter().flatten().all(|x| x.is_finite()) {
            return Err(NetError::BadPointCloud("non-finite coordinate"));
        }
        Ok(())
    }
}
