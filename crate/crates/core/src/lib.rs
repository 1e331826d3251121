//! Koopman autoencoder ensemble Kalman filter.
//!
//! A constrained autoencoder learns a latent space in which the dynamics are a
//! block-diagonal scaled rotation; an ensemble Kalman filter then assimilates
//! streaming measurements in that latent space, jointly estimating the latent
//! state and the eigenvalue moduli and arguments.
//!
//! Module map:
//!
//! - [`tensor_nn`]: dense layers, backpropagation, Adam, initialisers.
//! - [`koopman`]: polar eigenvalue parameterisation and block operator powers.
//! - [`kae`]: the autoencoder, its loss, sampling and training loop.
//! - [`freq_opt`]: global per-frequency grid search with Fourier resampling.
//! - [`enkf`]: stochastic EnKF plus latent and full-state assemblies.
//! - [`baselines`]: Hankel DMD, streaming / windowed EDMD, Hankel-DMDEnKF.
//! - [`synthetic`]: data generators and the dataset file format.
//! - [`harness`]: experiment orchestration, metrics and exports.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod enkf;
pub mod error;
pub mod freq_opt;
pub mod harness;
pub mod kae;
pub mod koopman;
pub mod synthetic;
pub mod tensor_nn;

pub use error::{Error, Result};

/// Seeded RNG used throughout; ChaCha keeps streams identical across platforms.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the crate's RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
