use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{generate_dataset, ChannelRealization, ScenarioConfig};
use crate::codec::{EncoderFamily, ID_MAX};
use crate::error::{Error, Result};
use crate::interop::{Method, TrainConfig};

/// A seeded instance of a scenario preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// `los`, `nlos` or `mixed`.
    pub preset: String,
    pub seed: u64,
    pub realizations: usize,
    /// Name used in tables and file names; defaults to the preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub los_power_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_snr_db: Option<f64>,
}

impl ScenarioSpec {
    pub fn new(preset: &str, seed: u64, realizations: usize) -> Self {
        Self {
            preset: preset.into(),
            seed,
            realizations,
            label: None,
            n_paths: None,
            los_power_fraction: None,
            measurement_snr_db: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.preset)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let mut s = ScenarioConfig::preset(&self.preset, self.seed)?;
        s.name = self.label().to_string();
        if let Some(n) = self.n_paths {
            s.n_paths = n;
        }
        if let Some(f) = self.los_power_fraction {
            s.los_power_fraction = f;
        }
        if let Some(snr) = self.measurement_snr_db {
            s.snr_db = snr;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn generate(&self) -> Result<Vec<ChannelRealization>> {
        Ok(generate_dataset(&self.scenario()?, self.realizations)?.collect())
    }
}

fn default_name() -> String {
    "experiment".into()
}

fn default_snr() -> f64 {
    20.0
}

fn default_ri() -> usize {
    crate::MAX_LAYERS
}

fn default_jobs() -> usize {
    1
}

fn default_deployed() -> Method {
    Method::SeqDedicated
}

/// Encoder id used for a family unless the config overrides it.
pub fn default_encoder_id(family: EncoderFamily) -> u8 {
    match family {
        EncoderFamily::DenseA => 4,
        EncoderFamily::SharedB => 11,
    }
}

/// A complete experiment: what to train, where, and how to evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub output_dir: PathBuf,
    pub families: Vec<EncoderFamily>,
    pub protocols: Vec<Method>,
    /// All listed protocols run on the first; the deployed system alone is
    /// retrained on the others.
    pub train_scenarios: Vec<ScenarioSpec>,
    pub eval_scenarios: Vec<ScenarioSpec>,
    /// Transmit SNR for closed-loop capacity.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Rank reported on evaluation links.
    #[serde(default = "default_ri")]
    pub ri: usize,
    /// Protocol whose models are evaluated on links.
    #[serde(default = "default_deployed")]
    pub deployed: Method,
    /// Encoder ids in the order of `families`; defaults per family.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub encoder_ids: Vec<u8>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn encoder_id(&self, family: EncoderFamily) -> u8 {
        self.families
            .iter()
            .position(|&f| f == family)
            .and_then(|i| self.encoder_ids.get(i).copied())
            .unwrap_or_else(|| default_encoder_id(family))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.families.is_empty() {
            return Err(Error::Config("no encoder families configured".into()));
        }
        if self.families.iter().collect::<BTreeSet<_>>().len() != self.families.len() {
            return Err(Error::Config("duplicate encoder family".into()));
        }
        if self.protocols.is_empty() {
            return Err(Error::Config("no protocols configured".into()));
        }
        if self.protocols.iter().collect::<BTreeSet<_>>().len() != self.protocols.len() {
            return Err(Error::Config("duplicate protocol".into()));
        }
        if self.protocols.contains(&Method::Common) && self.families.len() < 2 {
            return Err(Error::Config("the common protocol needs at least two families".into()));
        }
        if !self.protocols.contains(&self.deployed) {
            return Err(Error::Config(format!("deployed protocol {} is not among the protocols", self.deployed)));
        }
        if !self.encoder_ids.is_empty() {
            if self.encoder_ids.len() != self.families.len() {
                return Err(Error::Config("encoder_ids must list one id per family".into()));
            }
            if let Some(id) = self.encoder_ids.iter().find(|&&id| id > ID_MAX) {
                return Err(Error::Config(format!("encoder id {id} > {ID_MAX}")));
            }
        }
        let ids: BTreeSet<u8> = self.families.iter().map(|&f| self.encoder_id(f)).collect();
        if ids.len() != self.families.len() {
            return Err(Error::Config("encoder ids must be distinct".into()));
        }
        if !(1..=self.train.n_layers).contains(&self.ri) {
            return Err(Error::Config(format!("ri {} outside 1..={}", self.ri, self.train.n_layers)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.train_scenarios.is_empty() || self.eval_scenarios.is_empty() {
            return Err(Error::Config("need at least one train and one eval scenario".into()));
        }
        for (what, specs) in [("train", &self.train_scenarios), ("eval", &self.eval_scenarios)] {
            let mut labels = BTreeSet::new();
            for s in specs {
                s.scenario()?;
                if s.realizations == 0 {
                    return Err(Error::Config(format!("{what} scenario {} has no realizations", s.label())));
                }
                if !labels.insert(s.label()) {
                    return Err(Error::Config(format!("duplicate {what} scenario label {}", s.label())));
                }
                if !s.label().chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(Error::Config(format!("scenario label {:?} is not file-name safe", s.label())));
                }
            }
        }
        let train_seeds: BTreeSet<u64> = self.train_scenarios.iter().map(|s| s.seed).collect();
        if let Some(s) = self.eval_scenarios.iter().find(|s| train_seeds.contains(&s.seed)) {
            return Err(Error::Config(format!("eval scenario {} reuses training seed {}", s.label(), s.seed)));
        }
        Ok(())
    }
}
