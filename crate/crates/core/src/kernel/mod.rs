//! Numeric building blocks with hand-written backward passes.
//!
//! Every layer exposes a forward pass that returns whatever it needs to cache
//! and a backward pass that accumulates parameter gradients into a
//! [`Gradients`] map and returns the gradient with respect to its input. All
//! arithmetic is `f64`. [`gradcheck`] holds the central finite-difference
//! oracle the tests hold every backward pass against.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod gemm;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod schedule;
pub mod tensor;

pub use activation::{mse, relu, sigmoid, softmax, softmax_cross_entropy};
pub use batchnorm::BatchNorm;
pub use dense::Dense;
pub use gradcheck::{finite_diff_grad, finite_diff_input, relative_error};
pub use init::{he_init, uniform_init};
pub use lstm::{Lstm, LstmCache, LstmState};
pub use optim::{adam_step, nesterov_step, AdamConfig};
pub use params::{Gradients, ParamSet};
pub use schedule::{cosine_lr, LrSchedule};
pub use tensor::TensorBuf;
