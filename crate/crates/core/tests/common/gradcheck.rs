//! Finite-difference gradient scenarios for every trainable chain.

use super::{chain_loss, fd_check, FdResult};
use csifb::channel::{generate_channel, ScenarioConfig};
use csifb::codec::{
    block_loss, blocks_from_report, decoder_loss_grads, dequantize, distill_loss_grads, e2e_loss_grads, quantize,
    DecoderInput, Gradients, DISTILL_SHARPNESS,
};
use csifb::csi::extract_precoders;
use csifb::{BlockSample, DecoderModel, EncoderFamily, EncoderModel, QuantCodebook};

pub const EPS: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
pub const PER_TENSOR: usize = 48;

/// A labelled set of per-tensor results.
pub type Check = (String, Vec<FdResult>);

fn blocks(n: usize) -> Vec<BlockSample> {
    let h = generate_channel(&ScenarioConfig::preset("mixed", 21).unwrap(), 0).unwrap();
    let all = blocks_from_report(&extract_precoders(&h, 4).unwrap()).unwrap();
    all.into_iter().step_by(3).take(n).collect()
}

/// Tensor failures: error above `TOL`, more than one kink in five, or nothing checked.
pub fn failures(check: &Check) -> Vec<String> {
    check
        .1
        .iter()
        .filter(|r| r.rel_error >= TOL || r.skipped * 5 > r.checked + r.skipped || r.checked == 0)
        .map(|r| format!("{}: {r:?}", check.0))
        .collect()
}

pub fn worst(checks: &[Check]) -> f64 {
    checks.iter().flat_map(|c| c.1.iter().map(|r| r.rel_error)).fold(0.0, f64::max)
}

/// Encoder and decoder of the chain with the quantiser bypassed.
pub fn e2e(family: EncoderFamily) -> Vec<Check> {
    let batch = blocks(4);
    let enc = EncoderModel::init(family, 3, 17).unwrap();
    let dec = DecoderModel::init(0, 18).unwrap();
    let mut ge = Gradients::zeros_like(&enc.net);
    let mut gd = Gradients::zeros_like(&dec.net);
    let loss = e2e_loss_grads(&enc, &dec, &batch, None, None, &mut ge, &mut gd).unwrap();
    assert!((loss - chain_loss(&enc, &dec, &batch, None)).abs() < 1e-12);

    let enc_errs = fd_check(&enc.net, &ge, PER_TENSOR, EPS, 1, |net| {
        let probe = EncoderModel { net: net.clone(), ..enc.clone() };
        chain_loss(&probe, &dec, &batch, None)
    });
    assert_eq!(enc_errs.len(), enc.net.layers.len() * 2);
    let dec_errs = fd_check(&dec.net, &gd, PER_TENSOR, EPS, 2, |net| {
        let probe = DecoderModel { net: net.clone(), ..dec.clone() };
        chain_loss(&enc, &probe, &batch, None)
    });
    vec![(format!("{family} encoder"), enc_errs), (format!("{family} chain decoder"), dec_errs)]
}

/// Decoder with the encoder-id input, trained on dequantised latents.
pub fn common_decoder() -> Check {
    let enc = EncoderModel::init(EncoderFamily::DenseA, 0, 5).unwrap();
    let cb = QuantCodebook::default();
    let inputs: Vec<DecoderInput> = blocks(6)
        .into_iter()
        .enumerate()
        .map(|(i, target)| {
            let z = enc.encode(&target).unwrap().z;
            let latent = dequantize(&quantize(&z, &cb), &cb);
            DecoderInput { latent, encoder_id: Some(if i % 2 == 0 { 4 } else { 11 }), target }
        })
        .collect();
    let refs: Vec<&DecoderInput> = inputs.iter().collect();
    let dec = DecoderModel::init(1, 33).unwrap();
    let mut g = Gradients::zeros_like(&dec.net);
    decoder_loss_grads(&dec, &refs, &mut g).unwrap();
    let loss = |d: &DecoderModel| {
        inputs
            .iter()
            .map(|r| {
                let out = d.decode_batch(&[(r.latent, r.encoder_id)], 0).unwrap();
                block_loss(&r.target, &out[0]).unwrap()
            })
            .sum::<f64>()
            / inputs.len() as f64
    };
    let errs = fd_check(&dec.net, &g, PER_TENSOR, EPS, 3, |net| loss(&DecoderModel { net: net.clone(), ..dec.clone() }));
    ("common decoder".into(), errs)
}

/// Student encoders against a teacher's quantisation indices.
pub fn distillation() -> Vec<Check> {
    let cb = QuantCodebook::default();
    let batch = blocks(4);
    let teacher = EncoderModel::init(EncoderFamily::DenseA, 0, 8).unwrap();
    let targets: Vec<_> = batch.iter().map(|b| quantize(&teacher.encode(b).unwrap().z, &cb)).collect();
    let pairs: Vec<_> = batch.iter().zip(&targets).collect();
    let mut out = Vec::new();
    for family in EncoderFamily::ALL {
        let student = EncoderModel::init(family, 1, 9).unwrap();
        let mut g = Gradients::zeros_like(&student.net);
        distill_loss_grads(&student, &pairs, &cb, DISTILL_SHARPNESS, &mut g).unwrap();
        // Direct cross-entropy of the softmax over -beta (z - level)^2.
        let loss = |e: &EncoderModel| {
            let mut total = 0.0;
            for (b, q) in &pairs {
                let z = e.encode(b).unwrap().z;
                for (zi, &qi) in z.iter().zip(&q.indices) {
                    let logits: Vec<f64> = cb.levels.iter().map(|l| -DISTILL_SHARPNESS * (zi - l).powi(2)).collect();
                    let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
                    total += lse - logits[qi as usize];
                }
            }
            total / (pairs.len() * 64) as f64
        };
        let errs = fd_check(&student.net, &g, PER_TENSOR, EPS, 4, |net| loss(&EncoderModel { net: net.clone(), ..student.clone() }));
        out.push((format!("{family} distillation"), errs));
    }
    out
}
