use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enkf::NoiseConfig;
use crate::error::{Error, Result};
use crate::kae::TrainConfig;
use crate::synthetic::{PendulumConfig, ThetaSchedule};

/// Methods the harness can run on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KaeLatent,
    KaeFull,
    StreamingEdmd,
    WindowedEdmd,
    #[serde(rename = "hankel_dmdenkf")]
    HankelDmdEnkf,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::KaeLatent,
        Method::KaeFull,
        Method::StreamingEdmd,
        Method::WindowedEdmd,
        Method::HankelDmdEnkf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::KaeLatent => "kae_latent",
            Method::KaeFull => "kae_full",
            Method::StreamingEdmd => "streaming_edmd",
            Method::WindowedEdmd => "windowed_edmd",
            Method::HankelDmdEnkf => "hankel_dmdenkf",
        }
    }

    pub fn uses_kae(self) -> bool {
        matches!(self, Method::KaeLatent | Method::KaeFull)
    }

    fn index(self) -> u64 {
        Method::ALL.iter().position(|m| *m == self).expect("listed") as u64
    }

    /// Seed for this method's filter noise, distinct per method.
    pub fn stream_seed(self, seed: u64) -> u64 {
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (0x51ed_270b + self.index())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// One rotation pair, cubed (or raised to `nu`) and lifted.
    Single {
        #[serde(default = "default_nu")]
        nu: u32,
        sigma: f64,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        /// Overrides the default linear argument ramp.
        #[serde(default)]
        schedules: Option<Vec<ThetaSchedule>>,
    },
    /// Weekly, yearly and drifting monthly rotations.
    Multi {
        #[serde(default = "default_multi_sigma")]
        sigma: f64,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Rendered swinging disc.
    Pendulum {
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        render: PendulumConfig,
    },
}

fn default_nu() -> u32 {
    3
}
fn default_steps() -> usize {
    1000
}
fn default_dim() -> usize {
    100
}
fn default_multi_sigma() -> f64 {
    0.05
}

impl GeneratorConfig {
    pub fn sigma(&self) -> f64 {
        match self {
            GeneratorConfig::Single { sigma, .. }
            | GeneratorConfig::Multi { sigma, .. }
            | GeneratorConfig::Pendulum { sigma, .. } => *sigma,
        }
    }

    /// Number of rotation pairs in the ground truth.
    pub fn pairs(&self) -> usize {
        match self {
            GeneratorConfig::Single { schedules, .. } => schedules.as_ref().map_or(1, Vec::len),
            GeneratorConfig::Multi { .. } => 3,
            GeneratorConfig::Pendulum { .. } => 1,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            GeneratorConfig::Single { steps, .. } | GeneratorConfig::Multi { steps, .. } => *steps,
            GeneratorConfig::Pendulum { render, .. } => render.states,
        }
    }
}

/// Filter noise levels as configured. `alpha5` is derived from the data
/// unless given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSettings {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    /// Fixed observation variance; overrides the derived value.
    pub alpha5: Option<f64>,
    /// Multiplier on `σ²` pushed through the encoder (latent filters).
    pub alpha5_scale: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            alpha1: n.alpha1,
            alpha2: n.alpha2,
            alpha3: n.alpha3,
            alpha4: n.alpha4,
            alpha5: None,
            alpha5_scale: 30.0,
        }
    }
}

impl NoiseSettings {
    /// Resolve against a derived observation variance.
    pub fn resolve(&self, derived_alpha5: f64) -> NoiseConfig {
        NoiseConfig {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            alpha4: self.alpha4,
            alpha5: self.alpha5.unwrap_or(derived_alpha5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KaeSettings {
    pub hidden: Vec<usize>,
    pub pairs: usize,
    pub members: usize,
    pub noise: NoiseSettings,
    pub train: TrainConfig,
}

impl Default for KaeSettings {
    fn default() -> Self {
        Self {
            hidden: vec![10, 10],
            pairs: 1,
            members: 100,
            noise: NoiseSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmdSettings {
    /// Delay-embedding dimension `d`.
    pub delay: usize,
    /// DMD rank; `2f` when absent.
    pub rank: Option<usize>,
    /// Windowed EDMD window `w`.
    pub window: usize,
    pub members: usize,
    pub noise: NoiseSettings,
}

impl Default for DmdSettings {
    fn default() -> Self {
        Self {
            delay: 5,
            rank: None,
            window: 10,
            members: 100,
            noise: NoiseSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Forecast horizon for the per-step MSE.
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    /// Leading steps used for training / initial fits.
    #[serde(default = "default_spinup")]
    pub spinup: usize,
    /// Trailing steps used for the tail argument error in summaries.
    #[serde(default = "default_tail")]
    pub tail: usize,
    /// Half-width of the band around modulus 1 counted in summaries.
    #[serde(default = "default_tau_band")]
    pub tau_band: f64,
    #[serde(default)]
    pub kae: KaeSettings,
    #[serde(default)]
    pub dmd: DmdSettings,
}

fn default_methods() -> Vec<Method> {
    vec![Method::KaeLatent]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_horizon() -> u32 {
    10
}
fn default_spinup() -> usize {
    200
}
fn default_tail() -> usize {
    400
}
fn default_tau_band() -> f64 {
    0.02
}

impl ExperimentConfig {
    /// Default config around a generator.
    pub fn new(generator: GeneratorConfig) -> Self {
        Self {
            generator,
            methods: default_methods(),
            seeds: default_seeds(),
            horizon: default_horizon(),
            spinup: default_spinup(),
            tail: default_tail(),
            tau_band: default_tau_band(),
            kae: KaeSettings::default(),
            dmd: DmdSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(reason) => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn dmd_rank(&self) -> usize {
        self.dmd.rank.unwrap_or(2 * self.kae.pairs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let steps = self.generator.steps();
        if self.spinup < 2 || self.spinup >= steps {
            return Err(Error::Config(format!(
                "spin-up {} must be in 2..{steps}",
                self.spinup
            )));
        }
        if !(self.generator.sigma() >= 0.0 && self.generator.sigma().is_finite()) {
            return Err(Error::Config("sigma must be finite and nonnegative".into()));
        }
        if self.kae.pairs == 0 || self.kae.members < 2 || self.dmd.members < 2 {
            return Err(Error::Config(
                "pairs must be positive and ensembles need two members".into(),
            ));
        }
        if self.dmd.delay == 0 || self.dmd.window == 0 {
            return Err(Error::Config("delay and window must be positive".into()));
        }
        if self.dmd_rank() < 2 * self.kae.pairs {
            return Err(Error::Config(format!(
                "DMD rank {} cannot hold {} pairs",
                self.dmd_rank(),
                self.kae.pairs
            )));
        }
        if !(self.kae.noise.alpha5_scale > 0.0) || !(self.dmd.noise.alpha5_scale > 0.0) {
            return Err(Error::Config("alpha5_scale must be positive".into()));
        }
        self.kae.train.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
methods = ["kae_latent", "streaming_edmd"]
seeds = [1, 2]

[generator]
kind = "single"
sigma = 0.05

[kae.train]
epochs = 10

[kae.noise]
alpha3 = 1e-5
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.methods, vec![Method::KaeLatent, Method::StreamingEdmd]);
        assert_eq!(cfg.kae.train.epochs, 10);
        assert_eq!(cfg.kae.noise.alpha3, 1e-5);
        assert_eq!(cfg.horizon, 10);
        assert_eq!(cfg.dmd_rank(), 2);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            format!("{SAMPLE}\nbogus = 1"),
            SAMPLE.replace("sigma = 0.05", "sigma = 0.05\nfoo = 2"),
            SAMPLE.replace("epochs = 10", "epochs = 10\nepoch = 3"),
            SAMPLE.replace("alpha3 = 1e-5", "alpha6 = 1e-5"),
        ] {
            assert!(ExperimentConfig::from_toml(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_methods_rejected() {
        let text = SAMPLE.replace(
            r#"methods = ["kae_latent", "streaming_edmd"]"#,
            "methods = []",
        );
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let text = SAMPLE.replace("seeds = [1, 2]", "seeds = [1, 1]");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn pendulum_section() {
        let text = "methods = [\"kae_latent\"]\nspinup = 100\n[generator]\nkind = \"pendulum\"\n[generator.render]\nheight = 20\nwidth = 24\nradius = 2.0\nstates = 150\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.generator.steps(), 150);
        assert_eq!(cfg.generator.sigma(), 0.0);
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("dmd".parse::<Method>().is_err());
    }
}
