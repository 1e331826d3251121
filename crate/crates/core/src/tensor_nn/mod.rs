//! Minimal dense-network engine backing the autoencoder.
//!
//! Networks are plain stacks of fully connected layers. Batches are stored
//! column-wise (one sample per column) so a whole batch moves through a layer
//! as a single matrix product.

mod adam;
mod init;
mod layer;
mod network;
mod svd;

pub use adam::AdamState;
pub use init::{init_svd_linear, init_xavier, xavier_bound, SvdInit};
pub use layer::{Activation, DenseLayer, LayerRecord};
pub use network::{NetworkGrads, NetworkParams, Tape};
pub use svd::{thin_svd, ThinSvd};
