use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{provenance, ExchangeDataset, ExchangeRecord};
use crate::channel::ChannelRealization;
use crate::codec::{
    blocks_from_report, dequantize, quantize, AdamConfig, Autoencoder, BlockSample,
    DecoderModel, DecoderTrainer, EncoderDistiller, EncoderFamily, EncoderModel, QuantCodebook,
    QuantizedBlock, ID_MAX,
};
use crate::csi::extract_precoders;
use crate::error::{Error, Result};
use crate::pipeline::{decode_latents, layer_sgcs, reconstruct_blocks};
use crate::{LATENT_DIM, MAX_LAYERS};

/// Training hyper-parameters shared by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate at the last epoch relative to the first (cosine decay).
    pub final_lr_fraction: f64,
    pub seed: u64,
    pub n_layers: usize,
    /// Realizations with `id % holdout_modulus == holdout_modulus - 1` are
    /// held out.
    pub holdout_modulus: u64,
    /// Minimum number of training blocks.
    pub min_samples: usize,
    /// Encoder epochs of the gNB-first distillation stage.
    pub distill_epochs: usize,
    /// Proxy encoder family used by the gNB in gNB-first training.
    pub proxy_family: EncoderFamily,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            final_lr_fraction: 0.1,
            seed: 0,
            n_layers: MAX_LAYERS,
            holdout_modulus: 10,
            min_samples: 100,
            distill_epochs: 30,
            proxy_family: EncoderFamily::DenseA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::Config("final_lr_fraction must lie in [0, 1]".into()));
        }
        if !(1..=MAX_LAYERS).contains(&self.n_layers) {
            return Err(Error::Config(format!("n_layers {}", self.n_layers)));
        }
        if self.holdout_modulus < 2 {
            return Err(Error::Config("holdout_modulus must be at least 2".into()));
        }
        Ok(())
    }

    pub fn is_heldout(&self, realization_id: u64) -> bool {
        realization_id % self.holdout_modulus == self.holdout_modulus - 1
    }

    fn lr_at(&self, epoch: usize, epochs: usize) -> f64 {
        if epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (epochs - 1) as f64;
        let f = self.final_lr_fraction;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    E2e,
    SeqDedicated,
    Common,
    GnbFirst,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::E2e, Method::SeqDedicated, Method::Common, Method::GnbFirst];

    pub fn name(self) -> &'static str {
        match self {
            Method::E2e => "e2e",
            Method::SeqDedicated => "seq_dedicated",
            Method::Common => "common",
            Method::GnbFirst => "gnb_first",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown training method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: Method,
    pub family: Option<EncoderFamily>,
    pub encoder_id: Option<u8>,
    pub epoch_loss: Vec<f64>,
    /// Held-out mean SGCS per layer.
    pub heldout_sgcs: Vec<f64>,
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub config: TrainConfig,
}

impl TrainReport {
    /// Held-out SGCS averaged over layers.
    pub fn mean_sgcs(&self) -> f64 {
        self.heldout_sgcs.iter().sum::<f64>() / self.heldout_sgcs.len().max(1) as f64
    }
}

/// Block samples of the first `n_layers` layers, split by realization id.
pub fn split_blocks(channels: &[ChannelRealization], cfg: &TrainConfig) -> Result<(Vec<BlockSample>, Vec<BlockSample>)> {
    let mut train = Vec::new();
    let mut heldout = Vec::new();
    for ch in channels {
        let blocks = blocks_from_report(&extract_precoders(ch, cfg.n_layers)?)?;
        if cfg.is_heldout(ch.realization_id) {
            heldout.extend(blocks);
        } else {
            train.extend(blocks);
        }
    }
    if train.len() < cfg.min_samples.max(1) || heldout.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} training and {} held-out blocks (need at least {} training blocks and one held-out realization)",
            train.len(),
            heldout.len(),
            cfg.min_samples.max(1)
        )));
    }
    Ok((train, heldout))
}

/// Seeded shuffled mini-batch epochs; returns the mean loss of each epoch.
fn run_epochs<T>(
    items: &[T],
    epochs: usize,
    cfg: &TrainConfig,
    stream: u64,
    mut step: impl FnMut(&[&T], f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut rng = crate::codec::seeded_rng(cfg.seed, stream);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = cfg.lr_at(epoch, epochs);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&T> = chunk.iter().map(|&i| &items[i]).collect();
            total += step(&batch, lr)? * batch.len() as f64;
        }
        let mean = total / items.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        losses.push(mean);
    }
    Ok(losses)
}

/// Held-out SGCS per layer of encoder -> Q -> Q^-1 -> decoder.
pub fn evaluate_chain(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    codebook: &QuantCodebook,
    decoder_id: Option<u8>,
    blocks: &[BlockSample],
    n_layers: usize,
) -> Result<Vec<f64>> {
    let mut latents = Vec::with_capacity(blocks.len());
    for chunk in blocks.chunks(1024) {
        latents.extend(encoder.encode_batch(chunk)?.into_iter().map(|z| z.z));
    }
    let layers: Vec<usize> = blocks.iter().map(|b| b.layer_index).collect();
    let recon = reconstruct_blocks(decoder, codebook, &latents, &layers, decoder_id)?;
    Ok(layer_sgcs(blocks, &recon)?[..n_layers].to_vec())
}

/// Held-out SGCS per layer of a decoder on exchange records.
///
/// `decoder_id` overrides the id fed to a common decoder (for ablations);
/// by default each record's own id is used.
pub fn evaluate_decoder(
    decoder: &DecoderModel,
    records: &[&ExchangeRecord],
    decoder_id: Option<Option<u8>>,
    n_layers: usize,
) -> Result<Vec<f64>> {
    let inputs: Vec<_> = records
        .iter()
        .map(|r| {
            let id = decoder_id.unwrap_or((decoder.id_dims == 1).then_some(r.encoder_id));
            (r.latent(), id)
        })
        .collect();
    let layers: Vec<usize> = records.iter().map(|r| r.layer_index as usize).collect();
    let targets: Vec<BlockSample> = records.iter().map(|r| r.target()).collect();
    let recon = decode_latents(decoder, &inputs, &layers)?;
    Ok(layer_sgcs(&targets, &recon)?[..n_layers].to_vec())
}

/// Records of `ds` split into (train, held-out) by realization group.
pub fn split_records<'a>(ds: &'a ExchangeDataset, cfg: &TrainConfig) -> (Vec<&'a ExchangeRecord>, Vec<&'a ExchangeRecord>) {
    let group = ds.group_len();
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for (i, r) in ds.records.iter().enumerate() {
        if cfg.is_heldout((i / group) as u64) {
            heldout.push(r);
        } else {
            train.push(r);
        }
    }
    (train, heldout)
}

fn check_id(id: u8) -> Result<()> {
    if id > ID_MAX {
        return Err(Error::Config(format!("encoder id {id} > {ID_MAX}")));
    }
    Ok(())
}

/// Encoder plus the UE vendor's private proxy decoder.
#[derive(Debug, Clone)]
pub struct E2eOutcome {
    pub encoder: EncoderModel,
    pub proxy_decoder: DecoderModel,
    pub report: TrainReport,
}

const STREAM_E2E: u64 = 11;
const STREAM_DECODER: u64 = 12;
const STREAM_COMMON: u64 = 13;
const STREAM_DISTILL: u64 = 14;

fn e2e_on_blocks(
    family: EncoderFamily,
    encoder_id: u8,
    train: &[BlockSample],
    heldout: &[BlockSample],
    codebook: &QuantCodebook,
    cfg: &TrainConfig,
) -> Result<E2eOutcome> {
    let seed = cfg.seed.wrapping_add(family.tag() as u64 * 1000 + encoder_id as u64);
    let encoder = EncoderModel::init(family, encoder_id, seed)?;
    let decoder = DecoderModel::init(0, seed ^ 0x5eed)?;
    let mut ae = Autoencoder::new(encoder, decoder, codebook.clone(), cfg.adam())?;
    let epoch_loss = run_epochs(train, cfg.epochs, cfg, STREAM_E2E + 16 * encoder_id as u64, |batch, lr| {
        ae.set_learning_rate(lr);
        let owned: Vec<BlockSample> = batch.iter().map(|b| (*b).clone()).collect();
        ae.train_step(&owned)
    })?;
    let (encoder, proxy_decoder) = ae.into_parts();
    let heldout_sgcs = evaluate_chain(&encoder, &proxy_decoder, codebook, None, heldout, cfg.n_layers)?;
    let report = TrainReport {
        method: Method::E2e,
        family: Some(family),
        encoder_id: Some(encoder_id),
        epoch_loss,
        heldout_sgcs,
        train_samples: train.len(),
        heldout_samples: heldout.len(),
        config: cfg.clone(),
    };
    Ok(E2eOutcome { encoder, proxy_decoder, report })
}

/// Joint encoder/decoder training through the quantiser (UE vendor private).
pub fn train_end_to_end(
    family: EncoderFamily,
    encoder_id: u8,
    channels: &[ChannelRealization],
    codebook: &QuantCodebook,
    cfg: &TrainConfig,
) -> Result<E2eOutcome> {
    cfg.validate()?;
    check_id(encoder_id)?;
    let (train, heldout) = split_blocks(channels, cfg)?;
    e2e_on_blocks(family, encoder_id, &train, &heldout, codebook, cfg)
}

/// One record per (realization, layer, block), in that order.
pub fn export_exchange_dataset(
    encoder: &EncoderModel,
    codebook: &QuantCodebook,
    channels: &[ChannelRealization],
    n_layers: usize,
) -> Result<ExchangeDataset> {
    if channels.is_empty() {
        return Err(Error::InsufficientData("no channels to export".into()));
    }
    let mut records = Vec::with_capacity(channels.len() * n_layers * crate::N_BLOCKS);
    for ch in channels {
        let blocks = blocks_from_report(&extract_precoders(ch, n_layers)?)?;
        for (b, z) in blocks.iter().zip(encoder.encode_batch(&blocks)?) {
            records.push(record(&dequantize(&quantize(&z.z, codebook), codebook), b, encoder.encoder_id));
        }
    }
    let ds = ExchangeDataset {
        records,
        codebook: codebook.clone(),
        encoder_ids_present: BTreeSet::from([encoder.encoder_id]),
        provenance: provenance(encoder.encoder_id),
    };
    ds.validate()?;
    Ok(ds)
}

fn record(latent: &[f64; LATENT_DIM], target: &BlockSample, encoder_id: u8) -> ExchangeRecord {
    ExchangeRecord {
        dequantized_latent: latent.map(|v| v as f32),
        target_block: target.x.map(|v| v as f32),
        layer_index: target.layer_index as u8,
        encoder_id,
    }
}

fn train_decoder_on(
    records: &[&ExchangeRecord],
    id_dims: usize,
    cfg: &TrainConfig,
    stream: u64,
) -> Result<(DecoderModel, Vec<f64>)> {
    let inputs: Vec<_> = records.iter().map(|r| r.decoder_input(id_dims == 1)).collect();
    let decoder = DecoderModel::init(id_dims, cfg.seed.wrapping_add(0xdec0 + stream))?;
    let mut trainer = DecoderTrainer::new(decoder, cfg.adam());
    let losses = run_epochs(&inputs, cfg.epochs, cfg, stream, |batch, lr| {
        trainer.set_learning_rate(lr);
        trainer.train_step(batch)
    })?;
    Ok((trainer.decoder, losses))
}

/// Network-side decoder for a single vendor's exchange dataset.
pub fn train_dedicated_decoder(ds: &ExchangeDataset, cfg: &TrainConfig) -> Result<(DecoderModel, TrainReport)> {
    cfg.validate()?;
    ds.validate()?;
    let id = ds.single_encoder_id()?;
    let (train, heldout) = split_records(ds, cfg);
    if train.len() < cfg.min_samples.max(1) || heldout.is_empty() {
        return Err(Error::InsufficientData(format!("{} training / {} held-out records", train.len(), heldout.len())));
    }
    let n_layers = cfg.n_layers.min(ds.group_len() / crate::N_BLOCKS);
    let (decoder, epoch_loss) = train_decoder_on(&train, 0, cfg, STREAM_DECODER)?;
    let heldout_sgcs = evaluate_decoder(&decoder, &heldout, None, n_layers)?;
    let report = TrainReport {
        method: Method::SeqDedicated,
        family: None,
        encoder_id: Some(id),
        epoch_loss,
        heldout_sgcs,
        train_samples: train.len(),
        heldout_samples: heldout.len(),
        config: cfg.clone(),
    };
    Ok((decoder, report))
}

/// One decoder for several vendors, with the encoder id as an extra input.
/// Returns one report per dataset, in input order.
pub fn train_common_decoder(datasets: &[&ExchangeDataset], cfg: &TrainConfig) -> Result<(DecoderModel, Vec<TrainReport>)> {
    cfg.validate()?;
    if datasets.len() < 2 {
        return Err(Error::InvalidInput("common-decoder training needs at least two vendors".into()));
    }
    let mut ids = BTreeSet::new();
    for ds in datasets {
        ds.validate()?;
        let id = ds.single_encoder_id()?;
        if !ids.insert(id) {
            return Err(Error::InvalidInput(format!("encoder id {id} supplied by two datasets")));
        }
        if ds.codebook != datasets[0].codebook {
            return Err(Error::InvalidInput(format!("dataset for encoder {id} uses a different codebook")));
        }
    }
    let splits: Vec<_> = datasets.iter().map(|ds| split_records(ds, cfg)).collect();
    let train: Vec<&ExchangeRecord> = splits.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    if train.len() < cfg.min_samples.max(1) || splits.iter().any(|(_, h)| h.is_empty()) {
        return Err(Error::InsufficientData(format!("{} training records", train.len())));
    }
    let (decoder, epoch_loss) = train_decoder_on(&train, 1, cfg, STREAM_COMMON)?;
    let mut reports = Vec::with_capacity(datasets.len());
    for (ds, (tr, heldout)) in datasets.iter().zip(&splits) {
        let n_layers = cfg.n_layers.min(ds.group_len() / crate::N_BLOCKS);
        reports.push(TrainReport {
            method: Method::Common,
            family: None,
            encoder_id: Some(ds.single_encoder_id()?),
            epoch_loss: epoch_loss.clone(),
            heldout_sgcs: evaluate_decoder(&decoder, heldout, None, n_layers)?,
            train_samples: tr.len(),
            heldout_samples: heldout.len(),
            config: cfg.clone(),
        });
    }
    Ok((decoder, reports))
}

/// Encoder id the gNB assigns to its own proxy encoder.
pub const PROXY_ENCODER_ID: u8 = 0;

/// gNB side of gNB-first training.
#[derive(Debug, Clone)]
pub struct GnbStage1 {
    /// Deployed at the gNB.
    pub decoder: DecoderModel,
    /// Never leaves the gNB.
    pub proxy_encoder: EncoderModel,
    /// What the gNB hands to UE vendors: target blocks with the proxy's
    /// dequantised latents.
    pub handover: ExchangeDataset,
    pub report: TrainReport,
}

/// Artifacts of the gNB-first protocol.
#[derive(Debug, Clone)]
pub struct GnbFirstOutcome {
    pub decoder: DecoderModel,
    pub proxy_encoder: EncoderModel,
    /// Deployed at the UE.
    pub encoder: EncoderModel,
    pub handover: ExchangeDataset,
    pub stage1: TrainReport,
    pub report: TrainReport,
}

/// gNB trains a proxy encoder with the decoder it will deploy and exports
/// (target, latent) pairs for the UE vendors.
pub fn gnb_first_stage1(channels: &[ChannelRealization], codebook: &QuantCodebook, cfg: &TrainConfig) -> Result<GnbStage1> {
    cfg.validate()?;
    let (train, heldout) = split_blocks(channels, cfg)?;
    let outcome = e2e_on_blocks(cfg.proxy_family, PROXY_ENCODER_ID, &train, &heldout, codebook, cfg)?;
    let mut report = outcome.report;
    report.method = Method::GnbFirst;
    let handover = export_exchange_dataset(&outcome.encoder, codebook, channels, cfg.n_layers)?;
    Ok(GnbStage1 { decoder: outcome.proxy_decoder, proxy_encoder: outcome.encoder, handover, report })
}

/// UE side of gNB-first training: distils an encoder of `family` onto the
/// quantisation indices of the handover. `decoder` only scores the held-out
/// records.
pub fn distill_ue_encoder(
    handover: &ExchangeDataset,
    decoder: &DecoderModel,
    family: EncoderFamily,
    encoder_id: u8,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainReport)> {
    cfg.validate()?;
    check_id(encoder_id)?;
    handover.validate()?;
    let codebook = &handover.codebook;
    let (train, heldout) = split_records(handover, cfg);
    if train.len() < cfg.min_samples.max(1) || heldout.is_empty() {
        return Err(Error::InsufficientData(format!("{} training / {} held-out records", train.len(), heldout.len())));
    }
    let pairs: Vec<(BlockSample, QuantizedBlock)> = train
        .iter()
        .map(|r| {
            let indices = r.dequantized_latent.map(|v| codebook.index_of(v as f64));
            (r.target(), QuantizedBlock { indices })
        })
        .collect();
    let seed = cfg.seed.wrapping_add(family.tag() as u64 * 1000 + encoder_id as u64);
    let encoder = EncoderModel::init(family, encoder_id, seed)?;
    let mut distiller = EncoderDistiller::new(encoder, codebook.clone(), cfg.adam());
    let stream = STREAM_DISTILL + 16 * encoder_id as u64;
    let epoch_loss = run_epochs(&pairs, cfg.distill_epochs, cfg, stream, |batch, lr| {
        distiller.set_learning_rate(lr);
        let refs: Vec<(&BlockSample, &QuantizedBlock)> = batch.iter().map(|(s, q)| (s, q)).collect();
        distiller.train_step(&refs)
    })?;
    let encoder = distiller.encoder;
    let heldout_blocks: Vec<BlockSample> = heldout.iter().map(|r| r.target()).collect();
    let n_layers = cfg.n_layers.min(handover.group_len() / crate::N_BLOCKS);
    let heldout_sgcs = evaluate_chain(&encoder, decoder, codebook, None, &heldout_blocks, n_layers)?;
    let report = TrainReport {
        method: Method::GnbFirst,
        family: Some(family),
        encoder_id: Some(encoder_id),
        epoch_loss,
        heldout_sgcs,
        train_samples: pairs.len(),
        heldout_samples: heldout_blocks.len(),
        config: cfg.clone(),
    };
    Ok((encoder, report))
}

/// Both gNB-first stages for a single UE vendor.
pub fn train_gnb_first(
    channels: &[ChannelRealization],
    ue_family: EncoderFamily,
    ue_encoder_id: u8,
    codebook: &QuantCodebook,
    cfg: &TrainConfig,
) -> Result<GnbFirstOutcome> {
    check_id(ue_encoder_id)?;
    let stage1 = gnb_first_stage1(channels, codebook, cfg)?;
    let (encoder, report) = distill_ue_encoder(&stage1.handover, &stage1.decoder, ue_family, ue_encoder_id, cfg)?;
    Ok(GnbFirstOutcome {
        decoder: stage1.decoder,
        proxy_encoder: stage1.proxy_encoder,
        encoder,
        handover: stage1.handover,
        stage1: stage1.report,
        report,
    })
}
