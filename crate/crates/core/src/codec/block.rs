use crate::csi::{sgcs, Precoder, PrecoderReport};
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::{Complex64, BLOCK_LEN, BLOCK_SUBBANDS, MAX_LAYERS, N_BLOCKS, N_SUBBANDS, N_TX};

/// One layer's precoders over 14 sub-bands, flattened as
/// `[sub-band][antenna][re, im]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSample {
    pub x: [f64; BLOCK_LEN],
    pub layer_index: usize,
}

impl BlockSample {
    pub fn from_rows(rows: &[Precoder], layer_index: usize) -> Result<Self> {
        if rows.len() != BLOCK_SUBBANDS {
            return Err(Error::Shape(format!("{} rows, expected {BLOCK_SUBBANDS}", rows.len())));
        }
        let mut x = [0.0; BLOCK_LEN];
        for (k, row) in rows.iter().enumerate() {
            for (t, c) in row.iter().enumerate() {
                x[k * 2 * N_TX + 2 * t] = c.re;
                x[k * 2 * N_TX + 2 * t + 1] = c.im;
            }
        }
        let s = Self { x, layer_index };
        s.validate(1e-6)?;
        Ok(s)
    }

    /// Slice of an already flattened buffer; rows are normalised to unit
    /// norm (a zero row becomes the first canonical vector).
    pub fn normalized(raw: &[f64], layer_index: usize) -> Self {
        assert_eq!(raw.len(), BLOCK_LEN);
        let mut x = [0.0; BLOCK_LEN];
        for (dst, src) in x.chunks_exact_mut(2 * N_TX).zip(raw.chunks_exact(2 * N_TX)) {
            let n = src.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 && n.is_finite() {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s / n;
                }
            } else {
                dst[0] = 1.0;
            }
        }
        Self { x, layer_index }
    }

    pub fn row(&self, k: usize) -> Precoder {
        let r = &self.x[k * 2 * N_TX..(k + 1) * 2 * N_TX];
        std::array::from_fn(|t| Complex64::new(r[2 * t], r[2 * t + 1]))
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.layer_index >= MAX_LAYERS {
            return Err(Error::InvalidInput(format!("layer index {}", self.layer_index)));
        }
        for k in 0..BLOCK_SUBBANDS {
            let n = norm_sq(&self.row(k)).sqrt();
            if !n.is_finite() || (n - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!("block row {k} has norm {n}")));
            }
        }
        Ok(())
    }
}

/// All (layer, block) samples of a report, layer-major then block.
pub fn blocks_from_report(report: &PrecoderReport) -> Result<Vec<BlockSample>> {
    let mut out = Vec::with_capacity(report.n_layers() * N_BLOCKS);
    for (l, layer) in report.v.iter().enumerate() {
        if layer.len() != N_SUBBANDS {
            return Err(Error::Shape(format!("layer {l} has {} sub-bands", layer.len())));
        }
        for chunk in layer.chunks_exact(BLOCK_SUBBANDS) {
            out.push(BlockSample::from_rows(chunk, l)?);
        }
    }
    Ok(out)
}

/// Concatenates a layer's five blocks back into 70 per-sub-band vectors.
pub fn assemble_layer(blocks: &[BlockSample]) -> Result<Vec<Precoder>> {
    if blocks.len() != N_BLOCKS {
        return Err(Error::Shape(format!("{} blocks, expected {N_BLOCKS}", blocks.len())));
    }
    Ok(blocks.iter().flat_map(|b| (0..BLOCK_SUBBANDS).map(|k| b.row(k))).collect())
}

/// `1 - mean_k sgcs(s_k, s_hat_k)`, in `[0, 1]`.
pub fn block_loss(s: &BlockSample, s_hat: &BlockSample) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..BLOCK_SUBBANDS {
        acc += sgcs(&s.row(k), &s_hat.row(k))?;
    }
    Ok((1.0 - acc / BLOCK_SUBBANDS as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ScenarioConfig};
    use crate::csi::extract_precoders;

    fn sample() -> BlockSample {
        let ch = generate_channel(&ScenarioConfig::preset("mixed", 3).unwrap(), 0).unwrap();
        let report = extract_precoders(&ch, 4).unwrap();
        blocks_from_report(&report).unwrap().swap_remove(7)
    }

    #[test]
    fn report_splits_into_twenty_blocks() {
        let ch = generate_channel(&ScenarioConfig::preset("los", 3).unwrap(), 0).unwrap();
        let report = extract_precoders(&ch, 4).unwrap();
        let blocks = blocks_from_report(&report).unwrap();
        assert_eq!(blocks.len(), 20);
        assert_eq!(blocks[7].layer_index, 1);
        let layer2 = assemble_layer(&blocks[10..15]).unwrap();
        assert_eq!(layer2, report.v[2]);
    }

    #[test]
    fn loss_identity_orthogonal_and_phase() {
        let s = sample();
        assert!(block_loss(&s, &s).unwrap() < 1e-12);

        let mut rot = s.clone();
        for k in 0..BLOCK_SUBBANDS {
            let ph = Complex64::from_polar(1.0, 1.3 * k as f64 + 0.2);
            let row = s.row(k).map(|c| c * ph);
            for t in 0..N_TX {
                rot.x[k * 16 + 2 * t] = row[t].re;
                rot.x[k * 16 + 2 * t + 1] = row[t].im;
            }
        }
        assert!(block_loss(&s, &rot).unwrap() < 1e-12);

        let mut a = BlockSample { x: [0.0; BLOCK_LEN], layer_index: 0 };
        let mut b = a.clone();
        for k in 0..BLOCK_SUBBANDS {
            a.x[k * 16] = 1.0;
            b.x[k * 16 + 2] = 1.0;
        }
        assert!((block_loss(&a, &b).unwrap() - 1.0).abs() < 1e-15);

        let zero = BlockSample { x: [0.0; BLOCK_LEN], layer_index: 0 };
        assert!(block_loss(&a, &zero).is_err());
    }

    #[test]
    fn normalized_rows_are_unit() {
        let raw: Vec<f64> = (0..BLOCK_LEN).map(|i| (i as f64 * 0.7).sin() * 1e3).collect();
        BlockSample::normalized(&raw, 0).validate(1e-12).unwrap();
        BlockSample::normalized(&[0.0; BLOCK_LEN], 0).validate(1e-12).unwrap();
    }
}
