use crate::codec::{QuantizedBlock, ID_MAX};
use crate::error::{Error, Result};
use crate::{LATENT_DIM, MAX_LAYERS, N_BLOCKS};

/// Header bytes before the payload.
pub const HEADER_BYTES: usize = 2;
/// Payload bytes of one (layer, block): 64 two-bit indices.
pub const BLOCK_BYTES: usize = LATENT_DIM * 2 / 8;
/// Payload bytes per layer.
pub const LAYER_BYTES: usize = N_BLOCKS * BLOCK_BYTES;

/// Packed size of a message with rank `ri`.
pub const fn packed_len(ri: usize) -> usize {
    HEADER_BYTES + ri * LAYER_BYTES
}

/// MAC-CE style CSI report.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeedbackMessage {
    pub model_id: u8,
    pub ri: u8,
    pub cqi: u8,
    /// `ri * 640` bits, layer-major then block, indices MSB-first.
    pub payload: Vec<u8>,
}

impl FeedbackMessage {
    pub fn validate(&self) -> Result<()> {
        if self.model_id > ID_MAX {
            return Err(Error::InvalidInput(format!("model_id {} > {ID_MAX}", self.model_id)));
        }
        if !(1..=MAX_LAYERS as u8).contains(&self.ri) {
            return Err(Error::InvalidInput(format!("ri {} outside 1..={MAX_LAYERS}", self.ri)));
        }
        if self.cqi > 15 {
            return Err(Error::InvalidInput(format!("cqi {} > 15", self.cqi)));
        }
        let want = self.ri as usize * LAYER_BYTES;
        if self.payload.len() != want {
            return Err(Error::Shape(format!("payload {} bytes, expected {want}", self.payload.len())));
        }
        Ok(())
    }

    pub fn payload_bits(&self) -> usize {
        self.payload.len() * 8
    }
}

/// Header: model_id (4 bits), ri-1 (2), cqi (4), reserved zeros (6), MSB
/// first; then the payload.
pub fn pack(msg: &FeedbackMessage) -> Result<Vec<u8>> {
    msg.validate()?;
    let mut out = Vec::with_capacity(packed_len(msg.ri as usize));
    out.push((msg.model_id << 4) | ((msg.ri - 1) << 2) | (msg.cqi >> 2));
    out.push((msg.cqi & 0b11) << 6);
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

pub fn unpack(buf: &[u8]) -> Result<FeedbackMessage> {
    if buf.len() < HEADER_BYTES {
        return Err(Error::Truncated { needed: HEADER_BYTES, got: buf.len() });
    }
    let (b0, b1) = (buf[0], buf[1]);
    if b1 & 0b0011_1111 != 0 {
        return Err(Error::Malformed(format!("reserved header bits set: {:#04x}", b1 & 0x3f)));
    }
    let ri = ((b0 >> 2) & 0b11) + 1;
    let needed = packed_len(ri as usize);
    if buf.len() < needed {
        return Err(Error::Truncated { needed, got: buf.len() });
    }
    if buf.len() > needed {
        return Err(Error::Malformed(format!("{} bytes after a rank-{ri} report", buf.len() - needed)));
    }
    Ok(FeedbackMessage {
        model_id: b0 >> 4,
        ri,
        cqi: ((b0 & 0b11) << 2) | (b1 >> 6),
        payload: buf[HEADER_BYTES..].to_vec(),
    })
}

/// Packs `[layer][block]` indices into a message of rank `latents.len()`.
pub fn assemble_report(latents: &[Vec<QuantizedBlock>], model_id: u8, cqi: u8) -> Result<FeedbackMessage> {
    if !(1..=MAX_LAYERS).contains(&latents.len()) {
        return Err(Error::Shape(format!("{} layers", latents.len())));
    }
    let mut payload = Vec::with_capacity(latents.len() * LAYER_BYTES);
    for (l, layer) in latents.iter().enumerate() {
        if layer.len() != N_BLOCKS {
            return Err(Error::Shape(format!("layer {l} has {} blocks, expected {N_BLOCKS}", layer.len())));
        }
        for q in layer {
            q.validate(4)?;
            for c in q.indices.chunks_exact(4) {
                payload.push((c[0] << 6) | (c[1] << 4) | (c[2] << 2) | c[3]);
            }
        }
    }
    let msg = FeedbackMessage { model_id, ri: latents.len() as u8, cqi, payload };
    msg.validate()?;
    Ok(msg)
}

/// Inverse of [`assemble_report`].
pub fn disassemble_report(msg: &FeedbackMessage) -> Result<Vec<Vec<QuantizedBlock>>> {
    msg.validate()?;
    Ok(msg
        .payload
        .chunks_exact(LAYER_BYTES)
        .map(|layer| {
            layer
                .chunks_exact(BLOCK_BYTES)
                .map(|block| {
                    let mut indices = [0u8; LATENT_DIM];
                    for (i, q) in indices.iter_mut().enumerate() {
                        *q = (block[i / 4] >> (6 - 2 * (i % 4))) & 0b11;
                    }
                    QuantizedBlock { indices }
                })
                .collect()
        })
        .collect())
}
