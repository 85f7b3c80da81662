//! The offline feedback chain shared by evaluation and the link emulator:
//! precoders -> blocks -> encoder -> Q -> Q^-1 -> decoder -> re-orthogonalise
//! -> SGCS and capacity.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::codec::{
    assemble_layer, blocks_from_report, dequantize, quantize, BlockSample, DecoderModel,
    EncoderModel, QuantCodebook, QuantizedBlock,
};
use crate::csi::{
    closed_loop_capacity, extract_precoders, reorthogonalize, sgcs, type1_baseline, DftCodebook,
    Precoder, PrecoderReport,
};
use crate::error::{Error, Result};
use crate::{BLOCK_SUBBANDS, LATENT_DIM, MAX_LAYERS, N_BLOCKS, N_SUBBANDS};

/// Per-report quality of one feedback scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    /// Mean SGCS per layer over sub-bands.
    pub layer_sgcs: Vec<f64>,
    /// `[layer][sub-band]`.
    pub subband_sgcs: Vec<Vec<f64>>,
    pub capacity: f64,
}

/// `clamp(round(log2(1 + mean dominant eigenvalue * rho)), 0, 15)`.
pub fn cqi(report: &PrecoderReport, snr_db: f64) -> u8 {
    let Some(top) = report.eigenvalues.first().filter(|e| !e.is_empty()) else {
        return 0;
    };
    let mean = top.iter().sum::<f64>() / top.len() as f64;
    let v = (1.0 + mean * 10f64.powf(snr_db / 10.0)).log2().round();
    if v.is_nan() {
        0
    } else {
        v.clamp(0.0, 15.0) as u8
    }
}

/// UE side: `[layer][block]` quantised latents for the first `ri` layers.
pub fn ue_encode(
    encoder: &EncoderModel,
    codebook: &QuantCodebook,
    report: &PrecoderReport,
    ri: usize,
) -> Result<Vec<Vec<QuantizedBlock>>> {
    if !(1..=report.n_layers()).contains(&ri) {
        return Err(Error::InvalidInput(format!("ri {ri} with {} layers", report.n_layers())));
    }
    let truncated = PrecoderReport {
        v: report.v[..ri].to_vec(),
        eigenvalues: report.eigenvalues[..ri].to_vec(),
        realization_id: report.realization_id,
    };
    let blocks = blocks_from_report(&truncated)?;
    let latents = encoder.encode_batch(&blocks)?;
    let q: Vec<QuantizedBlock> = latents.iter().map(|z| quantize(&z.z, codebook)).collect();
    Ok(q.chunks_exact(N_BLOCKS).map(|c| c.to_vec()).collect())
}

/// gNB side: decoded, re-orthogonalised precoders `[layer][sub-band]`.
pub fn gnb_reconstruct(
    decoder: &DecoderModel,
    codebook: &QuantCodebook,
    latents: &[Vec<QuantizedBlock>],
    encoder_id: Option<u8>,
) -> Result<Vec<Vec<Precoder>>> {
    if latents.is_empty() || latents.len() > MAX_LAYERS {
        return Err(Error::Shape(format!("{} layers of latents", latents.len())));
    }
    let mut layers = Vec::with_capacity(latents.len());
    for (l, blocks) in latents.iter().enumerate() {
        if blocks.len() != N_BLOCKS {
            return Err(Error::Shape(format!("layer {l} has {} blocks", blocks.len())));
        }
        let inputs: Vec<([f64; LATENT_DIM], Option<u8>)> =
            blocks.iter().map(|q| (dequantize(q, codebook), encoder_id)).collect();
        layers.push(assemble_layer(&decoder.decode_batch(&inputs, l)?)?);
    }
    reorthogonalize_layers(&layers)
}

/// Applies [`reorthogonalize`] on every sub-band of `[layer][sub-band]`.
pub fn reorthogonalize_layers(layers: &[Vec<Precoder>]) -> Result<Vec<Vec<Precoder>>> {
    let mut out = vec![Vec::with_capacity(N_SUBBANDS); layers.len()];
    for k in 0..N_SUBBANDS {
        let v: Vec<Precoder> = layers.iter().map(|l| l[k]).collect();
        for (dst, w) in out.iter_mut().zip(reorthogonalize(&v)?) {
            dst.push(w);
        }
    }
    Ok(out)
}

/// Per-layer SGCS of `w` against the true report and the capacity of `w`.
pub fn link_metrics(
    h: &ChannelRealization,
    truth: &PrecoderReport,
    w: &[Vec<Precoder>],
    snr_db: f64,
) -> Result<LinkMetrics> {
    if w.len() > truth.n_layers() {
        return Err(Error::Shape(format!("{} layers fed back, {} known", w.len(), truth.n_layers())));
    }
    let mut layer_sgcs = Vec::with_capacity(w.len());
    let mut subband_sgcs = Vec::with_capacity(w.len());
    for (l, layer) in w.iter().enumerate() {
        let trace = truth.v[l].iter().zip(layer).map(|(a, b)| sgcs(a, b)).collect::<Result<Vec<f64>>>()?;
        layer_sgcs.push(trace.iter().sum::<f64>() / N_SUBBANDS as f64);
        subband_sgcs.push(trace);
    }
    Ok(LinkMetrics { layer_sgcs, subband_sgcs, capacity: closed_loop_capacity(h, w, snr_db)? })
}

/// Full ML feedback chain for one realization.
pub struct MlLink<'a> {
    pub encoder: &'a EncoderModel,
    pub decoder: &'a DecoderModel,
    pub codebook: &'a QuantCodebook,
    /// Passed to the decoder; `Some` only for a common decoder.
    pub decoder_id: Option<u8>,
    pub ri: usize,
    pub snr_db: f64,
}

impl MlLink<'_> {
    pub fn evaluate(&self, h: &ChannelRealization) -> Result<LinkMetrics> {
        let truth = extract_precoders(h, self.ri)?;
        let latents = ue_encode(self.encoder, self.codebook, &truth, self.ri)?;
        let w = gnb_reconstruct(self.decoder, self.codebook, &latents, self.decoder_id)?;
        link_metrics(h, &truth, &w, self.snr_db)
    }
}

/// Type-I wideband baseline for one realization.
pub fn baseline_link(h: &ChannelRealization, codebook: &DftCodebook, ri: usize, snr_db: f64) -> Result<LinkMetrics> {
    let truth = extract_precoders(h, ri)?;
    let base = type1_baseline(&truth, codebook)?;
    link_metrics(h, &truth, &base.v, snr_db)
}

/// Eigen precoders fed back losslessly.
pub fn ideal_link(h: &ChannelRealization, ri: usize, snr_db: f64) -> Result<LinkMetrics> {
    let truth = extract_precoders(h, ri)?;
    link_metrics(h, &truth, &truth.v, snr_db)
}

/// Decoder reconstruction of block samples through Q/Q^-1, in input order.
///
/// `latents` are continuous encoder outputs; they are quantised here.
pub fn reconstruct_blocks(
    decoder: &DecoderModel,
    codebook: &QuantCodebook,
    latents: &[[f64; LATENT_DIM]],
    layer_indices: &[usize],
    encoder_id: Option<u8>,
) -> Result<Vec<BlockSample>> {
    let inputs: Vec<_> = latents.iter().map(|z| (dequantize(&quantize(z, codebook), codebook), encoder_id)).collect();
    decode_latents(decoder, &inputs, layer_indices)
}

/// Decodes already-dequantised latents, tagging each output with its layer.
pub fn decode_latents(
    decoder: &DecoderModel,
    inputs: &[([f64; LATENT_DIM], Option<u8>)],
    layer_indices: &[usize],
) -> Result<Vec<BlockSample>> {
    if inputs.len() != layer_indices.len() {
        return Err(Error::Shape("latent and layer index counts differ".into()));
    }
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(1024).zip(layer_indices.chunks(1024)) {
        let decoded = decoder.decode_batch(chunk.0, 0)?;
        out.extend(decoded.into_iter().zip(chunk.1).map(|(mut b, &l)| {
            b.layer_index = l;
            b
        }));
    }
    Ok(out)
}

/// Mean SGCS per layer of reconstructed blocks against their targets.
///
/// Layers absent from the input get `NaN`.
pub fn layer_sgcs(targets: &[BlockSample], recon: &[BlockSample]) -> Result<[f64; MAX_LAYERS]> {
    if targets.len() != recon.len() {
        return Err(Error::Shape("target and reconstruction counts differ".into()));
    }
    let mut sum = [0.0; MAX_LAYERS];
    let mut count = [0usize; MAX_LAYERS];
    for (t, r) in targets.iter().zip(recon) {
        for k in 0..BLOCK_SUBBANDS {
            sum[t.layer_index] += sgcs(&t.row(k), &r.row(k))?;
        }
        count[t.layer_index] += BLOCK_SUBBANDS;
    }
    Ok(std::array::from_fn(|l| if count[l] == 0 { f64::NAN } else { sum[l] / count[l] as f64 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ScenarioConfig};
    use crate::codec::EncoderFamily;

    #[test]
    fn cqi_range_and_monotone() {
        let ch = generate_channel(&ScenarioConfig::preset("los", 1).unwrap(), 0).unwrap();
        let r = extract_precoders(&ch, 4).unwrap();
        let lo = cqi(&r, -30.0);
        let hi = cqi(&r, 60.0);
        assert_eq!(lo, 0);
        assert_eq!(hi, 15);
        assert!(cqi(&r, 10.0) <= cqi(&r, 20.0));
    }

    #[test]
    fn ideal_link_is_perfect_and_beats_baseline() {
        let ch = generate_channel(&ScenarioConfig::preset("nlos", 1).unwrap(), 3).unwrap();
        let ideal = ideal_link(&ch, 4, 15.0).unwrap();
        assert!(ideal.layer_sgcs.iter().all(|s| (s - 1.0).abs() < 1e-9));
        let base = baseline_link(&ch, &DftCodebook::default(), 4, 15.0).unwrap();
        assert!(base.capacity <= ideal.capacity + 1e-9);
    }

    #[test]
    fn ml_link_shapes() {
        let ch = generate_channel(&ScenarioConfig::preset("mixed", 1).unwrap(), 0).unwrap();
        let enc = EncoderModel::init(EncoderFamily::DenseA, 2, 1).unwrap();
        let dec = DecoderModel::init(0, 1).unwrap();
        let cb = QuantCodebook::default();
        for ri in 1..=4 {
            let link = MlLink { encoder: &enc, decoder: &dec, codebook: &cb, decoder_id: None, ri, snr_db: 20.0 };
            let m = link.evaluate(&ch).unwrap();
            assert_eq!(m.layer_sgcs.len(), ri);
            assert!(m.capacity.is_finite() && m.capacity > 0.0);
        }
        let truth = extract_precoders(&ch, 4).unwrap();
        assert!(ue_encode(&enc, &cb, &truth, 0).is_err());
        assert_eq!(ue_encode(&enc, &cb, &truth, 3).unwrap().len(), 3);
    }
}
