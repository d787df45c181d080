//! Minimal reverse-mode automatic differentiation on dense matrices.
//!
//! A [`Graph`] is a tape of eagerly evaluated tensor nodes. Calling
//! [`Graph::backward`] walks the tape in reverse and *builds the adjoint
//! computation out of ordinary graph ops*, so gradients are themselves
//! differentiable nodes. Differentiating a gradient (reverse-over-reverse)
//! therefore needs no special machinery — it is just a second `backward`
//! call. This is what lets the energy model regress its input gradient
//! with a first-order optimizer.
//!
//! The op set is deliberately small: enough for per-point MLPs with
//! max-pooling, Fourier time features, and quadratic losses, with every
//! vector-Jacobian product expressible inside the same op set.

mod graph;
mod tensor;

pub use graph::{Graph, Var};
pub use tensor::Tensor;
