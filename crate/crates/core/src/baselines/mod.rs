//! Comparison methods: exact DMD, time-delay embedding, streaming and
//! windowed EDMD over Hankel states, and a Hankel-DMD driven EnKF.

mod dmd;
mod dmdenkf;
mod hankel;
mod streaming;

pub use dmd::{dmd_fit, DmdModel};
pub use dmdenkf::{hankel_dmd_map, HankelDmdEnkf};
pub use hankel::{hankel_embed, HankelBuffer};
pub use streaming::{StreamingEdmd, WindowedEdmd};
