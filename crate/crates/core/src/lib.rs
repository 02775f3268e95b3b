//! Neural architecture search in a learned embedding space.
//!
//! A discrete chain architecture (one operator plus a set of skip sources per
//! layer) is flattened into a fixed-width origin vector. An LSTM autoencoder,
//! pretrained on uniform samples of that origin space, provides two halves:
//! the encoder (the architecture simulator) and the decoder. The controller is
//! a copy of the pretrained encoder that is fine-tuned with REINFORCE: it maps
//! the current architecture to a Gaussian policy over embeddings, the frozen
//! decoder turns the sampled embedding back into an origin vector, and
//! [`space::discretize`] snaps it to the next architecture to evaluate.
//!
//! Modules, bottom-up:
//!
//! * [`space`]: the architecture space, origin encoding, enumeration.
//! * [`kernel`]: tensors, parameter sets, layers with manual backward passes,
//!   optimizers, schedules and a finite-difference gradient oracle.
//! * [`autoencoder`]: the sequence autoencoder and its pretraining loop.
//! * [`controller`]: the Gaussian policy over embeddings and its REINFORCE update.
//! * [`evaluator`]: reward producers, the child convolutional network, datasets.
//! * [`search`]: the end-to-end search loop, run directories and reports.
//! * [`cli`]: the `nases` command line.

pub mod autoencoder;
pub mod cli;
pub mod controller;
pub mod error;
pub mod evaluator;
pub mod kernel;
pub mod rng;
pub mod search;
pub mod space;

pub use error::{Error, Result};
