//! Generative object-pose estimation on partially observed point clouds.
//!
//! The crate trains a score-based diffusion model over 9D poses
//! (6D rotation representation plus translation), samples pose candidates
//! by integrating the probability-flow ODE of a variance-exploding SDE,
//! ranks the candidates with an energy model whose input gradient was
//! fitted by denoising score matching, and aggregates the survivors by
//! quaternion averaging. Every learned component is cross-checked against
//! closed-form Gaussian-mixture oracles.
//!
//! The narrative guide lives in `book/`; its code snippets compile as
//! doc-tests (see `cargo test --doc`).

pub mod autodiff;
pub mod estimator;
pub mod eval;
pub mod geometry;
pub mod net;
pub mod sampler;
pub mod sde;
pub mod seedstream;
pub mod synth;
pub mod tracker;



