//! The constrained autoencoder: an encoder into `2f` latent coordinates, a
//! decoder back, and block-diagonal latent dynamics from a
//! [`KoopmanSpectrum`](crate::koopman::KoopmanSpectrum).

mod checkpoint;
mod loss;
mod model;
mod sampling;
mod train;

pub use checkpoint::{config_hash, Checkpoint};
pub use loss::{
    batch_loss, batch_loss_and_grad, gather_batch, sample_loss, KaeGrads, LossTerms, LossWeights,
};
pub use model::{propagate_columns, Architecture, KaeModel, TAU_FLOOR};
pub use sampling::{all_pairs, sample_batch, TrainSample};
pub use train::{
    column_mean, default_theta, fit, train, write_history_csv, EpochRecord, TrainConfig,
    TrainOutcome,
};
