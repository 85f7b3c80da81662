//! Config file shared by the single-step commands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use csifb::channel::read_channels;
use csifb::codec::{read_codebook, read_model, write_codebook, write_model, ModelFile};
use csifb::interop::{read_exchange, write_exchange, TrainConfig};
use csifb::{ChannelRealization, DecoderModel, EncoderFamily, EncoderModel, Error, ExchangeDataset, QuantCodebook, Result};
use serde::{Deserialize, Serialize};

/// Every step reads the fields it needs; a missing one is a config error.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub channels: Option<PathBuf>,
    pub family: Option<EncoderFamily>,
    pub encoder_id: Option<u8>,
    pub encoder: Option<PathBuf>,
    pub decoder: Option<PathBuf>,
    pub proxy_decoder: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    /// Default codebook when absent.
    pub codebook: Option<PathBuf>,
    pub handover_dir: Option<PathBuf>,
    /// Where to write the training report (JSON).
    pub report: Option<PathBuf>,
    pub emulate: Option<EmulateConfig>,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulateConfig {
    pub ticks: u32,
    pub ri: usize,
    pub snr_db: f64,
    /// Model id the UE announces.
    pub model_id: u8,
    /// Decoder files the gNB can dispatch to, keyed by model id.
    pub registry: BTreeMap<u8, PathBuf>,
    /// Id fed to common decoders, keyed by model id.
    #[serde(default)]
    pub decoder_ids: BTreeMap<u8, u8>,
    /// Session log (JSON lines); stdout when absent.
    pub log: Option<PathBuf>,
}

fn need<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Config(format!("config field `{field}` is required for this command")))
}

impl StepConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn family(&self) -> Result<EncoderFamily> {
        need(&self.family, "family").copied()
    }

    pub fn encoder_id(&self) -> Result<u8> {
        need(&self.encoder_id, "encoder_id").copied()
    }

    pub fn path(&self, v: &Option<PathBuf>, field: &str) -> Result<PathBuf> {
        need(v, field).cloned()
    }

    pub fn emulate(&self) -> Result<&EmulateConfig> {
        need(&self.emulate, "emulate")
    }

    pub fn load_channels(&self) -> Result<Vec<ChannelRealization>> {
        let path = self.path(&self.channels, "channels")?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        read_channels(BufReader::new(File::open(&path)?), &name)
    }

    pub fn load_codebook(&self) -> Result<QuantCodebook> {
        match &self.codebook {
            Some(p) => read_codebook(BufReader::new(File::open(p)?)),
            None => Ok(QuantCodebook::default()),
        }
    }

    pub fn load_encoder(&self) -> Result<EncoderModel> {
        match read_model(BufReader::new(File::open(self.path(&self.encoder, "encoder")?)?))? {
            ModelFile::Encoder(e) => Ok(e),
            ModelFile::Decoder(_) => Err(Error::Config("`encoder` points at a decoder file".into())),
        }
    }
}

pub fn load_decoder(path: &Path) -> Result<DecoderModel> {
    match read_model(BufReader::new(File::open(path)?))? {
        ModelFile::Decoder(d) => Ok(d),
        ModelFile::Encoder(_) => Err(Error::Config(format!("{} is an encoder file", path.display()))),
    }
}

pub fn load_dataset(path: &Path) -> Result<ExchangeDataset> {
    read_exchange(BufReader::new(File::open(path)?))
}

pub fn save_model(path: &Path, model: ModelFile) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), &model)
}

pub fn save_dataset(path: &Path, ds: &ExchangeDataset) -> Result<()> {
    write_exchange(BufWriter::new(File::create(path)?), ds)
}

pub fn save_codebook(path: &Path, cb: &QuantCodebook) -> Result<()> {
    write_codebook(BufWriter::new(File::create(path)?), cb)
}

pub fn save_json<T: Serialize>(path: Option<&PathBuf>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}
