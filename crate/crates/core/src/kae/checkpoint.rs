use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::KaeModel;
use crate::error::{Error, Result};
use crate::koopman::KoopmanSpectrum;
use crate::tensor_nn::{LayerRecord, NetworkParams};

const FORMAT: &str = "kae-enkf-checkpoint";
const VERSION: u32 = 1;

/// On-disk model: JSON with shortest round-trip float formatting, so a save
/// and load reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder: Vec<LayerRecord>,
    pub decoder: Vec<LayerRecord>,
    pub spectrum: KoopmanSpectrum,
    pub mean: Vec<f64>,
    /// SHA-256 of the configuration text the model was trained with.
    pub config_hash: String,
}

/// Hex SHA-256 of a configuration echo.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn from_model(model: &KaeModel, config_hash: String) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            encoder: model.encoder.records(),
            decoder: model.decoder.records(),
            spectrum: model.spectrum.clone(),
            mean: model.mean.iter().copied().collect(),
            config_hash,
        }
    }

    pub fn into_model(self) -> Result<KaeModel> {
        KaeModel::from_parts(
            NetworkParams::from_records(self.encoder)?,
            NetworkParams::from_records(self.decoder)?,
            self.spectrum,
            DVector::from_vec(self.mean),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint fields always serialise")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported checkpoint {} v{}", ck.format, ck.version),
            });
        }
        // Re-validate: serde bypasses the spectrum constructor.
        KoopmanSpectrum::new(ck.spectrum.tau().to_vec(), ck.spectrum.theta().to_vec()).map_err(
            |e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            },
        )?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
