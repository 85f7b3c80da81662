//! Losses, gradients and single optimisation steps.
//!
//! The SGCS loss is evaluated on the raw decoder output `y`; since SGCS is
//! scale invariant this equals [`block_loss`](super::block_loss) on the
//! renormalised output, and avoids differentiating through the
//! renormalisation separately.

use super::block::BlockSample;
use super::model::{DecoderModel, EncoderModel};
use super::net::Gradients;
use super::optim::{Adam, AdamConfig};
use super::quant::{dequantize, quantize, QuantCodebook, QuantizedBlock};
use crate::error::{Error, Result};
use crate::{BLOCK_LEN, BLOCK_SUBBANDS, LATENT_DIM, N_TX};

/// `beta` in the distillation logits `-beta * (z - level)^2`.
pub const DISTILL_SHARPNESS: f64 = 16.0;

/// One decoder training example: what the network side sees.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderInput {
    pub latent: [f64; LATENT_DIM],
    pub encoder_id: Option<u8>,
    pub target: BlockSample,
}

/// Mean block loss of raw outputs `y` against `targets`; writes `dL/dy`.
fn sgcs_loss_grads<'a>(targets: impl ExactSizeIterator<Item = &'a BlockSample>, y: &[f64], d_y: &mut [f64]) -> f64 {
    let batch = targets.len();
    let scale = 1.0 / (BLOCK_SUBBANDS * batch) as f64;
    let mut total = 0.0;
    for (b, s) in targets.enumerate() {
        for k in 0..BLOCK_SUBBANDS {
            let off = b * BLOCK_LEN + k * 2 * N_TX;
            let yr = &y[off..off + 2 * N_TX];
            let sr = &s.x[k * 2 * N_TX..(k + 1) * 2 * N_TX];
            let dr = &mut d_y[off..off + 2 * N_TX];
            let n: f64 = yr.iter().map(|v| v * v).sum();
            if !(n > 1e-300) {
                // Renormalisation maps a zero row to e1.
                total += sr[0] * sr[0] + sr[1] * sr[1];
                dr.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            let (mut ar, mut ai) = (0.0, 0.0);
            for t in 0..N_TX {
                let (p, q, u, v) = (sr[2 * t], sr[2 * t + 1], yr[2 * t], yr[2 * t + 1]);
                ar += p * u + q * v;
                ai += p * v - q * u;
            }
            let a2 = ar * ar + ai * ai;
            total += a2 / n;
            for t in 0..N_TX {
                let (p, q) = (sr[2 * t], sr[2 * t + 1]);
                let du = 2.0 * (ar * p - ai * q) / n - a2 * 2.0 * yr[2 * t] / (n * n);
                let dv = 2.0 * (ar * q + ai * p) / n - a2 * 2.0 * yr[2 * t + 1] / (n * n);
                dr[2 * t] = -scale * du;
                dr[2 * t + 1] = -scale * dv;
            }
        }
    }
    1.0 - total * scale
}

fn check_batch(len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(())
}

fn check_loss(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged(format!("{what}: loss is {loss}")))
    }
}

/// Mean block loss of encoder -> Q -> Q^-1 -> decoder over `batch` and the
/// gradients of both networks.
///
/// With `codebook = None` the quantiser is bypassed and the gradients are
/// exact; otherwise the straight-through rule passes `dL/dz` unchanged
/// inside the codebook domain and zeroes it outside.
pub fn e2e_loss_grads(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    batch: &[BlockSample],
    codebook: Option<&QuantCodebook>,
    encoder_id: Option<u8>,
    enc_grads: &mut Gradients,
    dec_grads: &mut Gradients,
) -> Result<f64> {
    check_batch(batch.len())?;
    let n = batch.len();
    let mut x = Vec::with_capacity(n * BLOCK_LEN);
    for s in batch {
        x.extend_from_slice(&s.x);
    }
    let enc_cache = encoder.net.forward(&x, n);
    let z = enc_cache.output();

    let in_len = decoder.input_len();
    let mut dec_in = Vec::with_capacity(n * in_len);
    for zb in z.chunks_exact(LATENT_DIM) {
        match codebook {
            Some(cb) => decoder.fill_input(&dequantize(&quantize(zb, cb), cb), encoder_id, &mut dec_in)?,
            None => decoder.fill_input(zb, encoder_id, &mut dec_in)?,
        }
    }
    let dec_cache = decoder.net.forward(&dec_in, n);
    let mut d_y = vec![0.0; n * BLOCK_LEN];
    let loss = check_loss(sgcs_loss_grads(batch.iter(), dec_cache.output(), &mut d_y), "end-to-end")?;

    let d_in = decoder.net.backward(&dec_cache, &d_y, dec_grads, true).expect("input gradient requested");
    let mut d_z = Vec::with_capacity(n * LATENT_DIM);
    for (row, zb) in d_in.chunks_exact(in_len).zip(z.chunks_exact(LATENT_DIM)) {
        match codebook {
            Some(cb) => {
                let (lo, hi) = cb.domain();
                d_z.extend(row[..LATENT_DIM].iter().zip(zb).map(|(g, &v)| if v >= lo && v <= hi { *g } else { 0.0 }));
            }
            None => d_z.extend_from_slice(&row[..LATENT_DIM]),
        }
    }
    encoder.net.backward(&enc_cache, &d_z, enc_grads, false);
    Ok(loss)
}

/// Mean block loss of the decoder alone on exchanged latents.
pub fn decoder_loss_grads(decoder: &DecoderModel, batch: &[&DecoderInput], grads: &mut Gradients) -> Result<f64> {
    check_batch(batch.len())?;
    let n = batch.len();
    let mut input = Vec::with_capacity(n * decoder.input_len());
    for r in batch {
        decoder.fill_input(&r.latent, r.encoder_id, &mut input)?;
    }
    let cache = decoder.net.forward(&input, n);
    let mut d_y = vec![0.0; n * BLOCK_LEN];
    let loss = check_loss(sgcs_loss_grads(batch.iter().map(|r| &r.target), cache.output(), &mut d_y), "decoder")?;
    decoder.net.backward(&cache, &d_y, grads, false);
    Ok(loss)
}

/// Per-dimension cross-entropy of the soft assignment
/// `softmax_c(-beta (z - level_c)^2)` against `indices`, averaged over
/// dimensions and batch.
pub fn distill_loss_grads(
    encoder: &EncoderModel,
    batch: &[(&BlockSample, &QuantizedBlock)],
    codebook: &QuantCodebook,
    beta: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    check_batch(batch.len())?;
    let n = batch.len();
    let mut x = Vec::with_capacity(n * BLOCK_LEN);
    for (s, _) in batch {
        x.extend_from_slice(&s.x);
    }
    let cache = encoder.net.forward(&x, n);
    let levels = &codebook.levels;
    let scale = 1.0 / (n * LATENT_DIM) as f64;
    let mut d_z = vec![0.0; n * LATENT_DIM];
    let mut total = 0.0;
    let mut logits = vec![0.0; levels.len()];
    for (b, (zb, (_, q))) in cache.output().chunks_exact(LATENT_DIM).zip(batch).enumerate() {
        for i in 0..LATENT_DIM {
            let z = zb[i];
            for (l, lv) in logits.iter_mut().zip(levels) {
                *l = -beta * (z - lv) * (z - lv);
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let target = q.indices[i] as usize;
            total += max + sum.ln() - logits[target];
            let mut g = 0.0;
            for (c, (l, lv)) in logits.iter().zip(levels).enumerate() {
                let p = (l - max).exp() / sum;
                let indicator = if c == target { 1.0 } else { 0.0 };
                g += (p - indicator) * (-2.0 * beta * (z - lv));
            }
            d_z[b * LATENT_DIM + i] = g * scale;
        }
    }
    let loss = check_loss(total * scale, "distillation")?;
    encoder.net.backward(&cache, &d_z, grads, false);
    Ok(loss)
}

/// Encoder and decoder trained jointly through the quantiser.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    pub codebook: QuantCodebook,
    enc_opt: Adam,
    dec_opt: Adam,
    enc_grads: Gradients,
    dec_grads: Gradients,
}

impl Autoencoder {
    pub fn new(encoder: EncoderModel, decoder: DecoderModel, codebook: QuantCodebook, adam: AdamConfig) -> Result<Self> {
        if decoder.id_dims != 0 {
            return Err(Error::Config("end-to-end training uses a dedicated decoder".into()));
        }
        codebook.validate()?;
        Ok(Self {
            enc_opt: Adam::new(&encoder.net, adam),
            dec_opt: Adam::new(&decoder.net, adam),
            enc_grads: Gradients::zeros_like(&encoder.net),
            dec_grads: Gradients::zeros_like(&decoder.net),
            encoder,
            decoder,
            codebook,
        })
    }

    pub fn train_step(&mut self, batch: &[BlockSample]) -> Result<f64> {
        let loss = e2e_loss_grads(
            &self.encoder,
            &self.decoder,
            batch,
            Some(&self.codebook),
            None,
            &mut self.enc_grads,
            &mut self.dec_grads,
        )?;
        self.enc_opt.step(&mut self.encoder.net, &self.enc_grads);
        self.dec_opt.step(&mut self.decoder.net, &self.dec_grads);
        Ok(loss)
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.enc_opt.config.lr = lr;
        self.dec_opt.config.lr = lr;
    }

    pub fn into_parts(self) -> (EncoderModel, DecoderModel) {
        (self.encoder, self.decoder)
    }
}

#[derive(Debug, Clone)]
pub struct DecoderTrainer {
    pub decoder: DecoderModel,
    opt: Adam,
    grads: Gradients,
}

impl DecoderTrainer {
    pub fn new(decoder: DecoderModel, adam: AdamConfig) -> Self {
        Self { opt: Adam::new(&decoder.net, adam), grads: Gradients::zeros_like(&decoder.net), decoder }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt.config.lr = lr;
    }

    pub fn train_step(&mut self, batch: &[&DecoderInput]) -> Result<f64> {
        let loss = decoder_loss_grads(&self.decoder, batch, &mut self.grads)?;
        self.opt.step(&mut self.decoder.net, &self.grads);
        Ok(loss)
    }
}

/// Trains an encoder to reproduce another encoder's quantisation indices.
#[derive(Debug, Clone)]
pub struct EncoderDistiller {
    pub encoder: EncoderModel,
    pub codebook: QuantCodebook,
    pub beta: f64,
    opt: Adam,
    grads: Gradients,
}

impl EncoderDistiller {
    pub fn new(encoder: EncoderModel, codebook: QuantCodebook, adam: AdamConfig) -> Self {
        Self {
            opt: Adam::new(&encoder.net, adam),
            grads: Gradients::zeros_like(&encoder.net),
            beta: DISTILL_SHARPNESS,
            encoder,
            codebook,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt.config.lr = lr;
    }

    pub fn train_step(&mut self, batch: &[(&BlockSample, &QuantizedBlock)]) -> Result<f64> {
        let loss = distill_loss_grads(&self.encoder, batch, &self.codebook, self.beta, &mut self.grads)?;
        self.opt.step(&mut self.encoder.net, &self.grads);
        Ok(loss)
    }
}
