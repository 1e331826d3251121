//! Seeded data generators: stacked planar rotations lifted through a power
//! nonlinearity, and a rendered swinging disc.

mod dataset;
mod pendulum;
mod rotation;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub use dataset::{read_dataset, write_dataset, DatasetHeader};
pub use pendulum::{gen_pendulum_frames, write_pgm, PendulumConfig, PendulumRun};
pub use rotation::{
    gen_multi_freq, gen_single_freq, generate_rotation, RotationGenConfig, SyntheticRun,
    ThetaSchedule,
};

/// Add iid `N(0, σ²)` noise to every entry, column by column.
pub fn add_noise(states: &DMatrix<f64>, sigma: f64, rng: &mut crate::Rng) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise level {sigma} must be finite and nonnegative"
        )));
    }
    if sigma == 0.0 {
        return Ok(states.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = states.clone();
    out.iter_mut().for_each(|v| *v += normal.sample(rng));
    Ok(out)
}
