use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::block::BlockSample;
use super::net::{seeded_rng, Activation, Dense, Network};
use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::{BLOCK_LEN, BLOCK_SUBBANDS, LATENT_DIM, N_TX};

const MODEL_MAGIC: &[u8; 4] = b"CSMW";
const MODEL_VERSION: u16 = 1;
const DECODER_FAMILY_TAG: u8 = 0xFF;

/// Largest encoder / model id.
pub const ID_MAX: u8 = 15;

/// Scalar id input of a common decoder: `(id - ID_MAX/2) / ID_MAX`.
pub fn id_feature(id: u8) -> f64 {
    (id as f64 - ID_MAX as f64 / 2.0) / ID_MAX as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderFamily {
    /// Fully connected: 224 -> 256 -> 128 -> 64.
    DenseA,
    /// Per-sub-band shared 16 -> 32 stage, then 448 -> 128 -> 64.
    SharedB,
}

impl EncoderFamily {
    pub const ALL: [EncoderFamily; 2] = [EncoderFamily::DenseA, EncoderFamily::SharedB];

    pub fn tag(self) -> u8 {
        match self {
            EncoderFamily::DenseA => 0,
            EncoderFamily::SharedB => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(EncoderFamily::DenseA),
            1 => Ok(EncoderFamily::SharedB),
            _ => Err(Error::Malformed(format!("unknown encoder family tag {tag}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderFamily::DenseA => "dense_a",
            EncoderFamily::SharedB => "shared_b",
        }
    }

    /// `(rows, cols, groups, activation)` per layer.
    fn topology(self) -> Vec<(usize, usize, usize, Activation)> {
        use Activation::*;
        match self {
            EncoderFamily::DenseA => vec![
                (256, BLOCK_LEN, 1, Relu),
                (128, 256, 1, Relu),
                (LATENT_DIM, 128, 1, Tanh),
            ],
            EncoderFamily::SharedB => vec![
                (32, 2 * N_TX, BLOCK_SUBBANDS, Relu),
                (128, 32 * BLOCK_SUBBANDS, 1, Relu),
                (LATENT_DIM, 128, 1, Tanh),
            ],
        }
    }
}

impl std::fmt::Display for EncoderFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EncoderFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense_a" | "dense-a" | "a" => Ok(EncoderFamily::DenseA),
            "shared_b" | "shared-b" | "b" => Ok(EncoderFamily::SharedB),
            other => Err(Error::Config(format!("unknown encoder family {other:?}"))),
        }
    }
}

fn decoder_topology(id_dims: usize) -> Vec<(usize, usize, usize, Activation)> {
    use Activation::*;
    vec![
        (256, LATENT_DIM + id_dims, 1, Relu),
        (256, 256, 1, Relu),
        (BLOCK_LEN, 256, 1, Identity),
    ]
}

fn build(topology: &[(usize, usize, usize, Activation)], seed: u64, stream: u64) -> Network {
    let mut rng = seeded_rng(seed, stream);
    Network {
        layers: topology
            .iter()
            .map(|&(r, c, g, a)| Dense::init(r, c, g, a, &mut rng))
            .collect(),
    }
}

fn check_topology(net: &Network, topology: &[(usize, usize, usize, Activation)]) -> Result<()> {
    let ok = net.layers.len() == topology.len()
        && net.layers.iter().zip(topology).all(|(l, &(r, c, g, a))| {
            l.rows == r
                && l.cols == c
                && l.groups == g
                && l.activation == a
                && l.weight.len() == r * c
                && l.bias.len() == r
        });
    if ok {
        Ok(())
    } else {
        Err(Error::Shape("network does not match its declared architecture".into()))
    }
}

/// Continuous encoder output for one (layer, block).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentBlock {
    pub z: [f64; LATENT_DIM],
}

impl LatentBlock {
    pub fn validate(&self) -> Result<()> {
        if self.z.iter().all(|v| v.is_finite() && v.abs() < 1.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput("latent outside (-1, 1)".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub family: EncoderFamily,
    pub encoder_id: u8,
    pub net: Network,
}

impl EncoderModel {
    pub fn init(family: EncoderFamily, encoder_id: u8, seed: u64) -> Result<Self> {
        if encoder_id > ID_MAX {
            return Err(Error::Config(format!("encoder id {encoder_id} > {ID_MAX}")));
        }
        Ok(Self { family, encoder_id, net: build(&family.topology(), seed, 1) })
    }

    pub fn validate(&self) -> Result<()> {
        check_topology(&self.net, &self.family.topology())?;
        if !self.net.is_finite() {
            return Err(Error::NonFinite("encoder weights".into()));
        }
        Ok(())
    }

    pub fn encode(&self, s: &BlockSample) -> Result<LatentBlock> {
        Ok(self.encode_batch(std::slice::from_ref(s))?.remove(0))
    }

    pub fn encode_batch(&self, samples: &[BlockSample]) -> Result<Vec<LatentBlock>> {
        if !self.net.is_finite() {
            return Err(Error::NonFinite("encoder weights".into()));
        }
        let mut input = Vec::with_capacity(samples.len() * BLOCK_LEN);
        for s in samples {
            input.extend_from_slice(&s.x);
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder input".into()));
        }
        let cache = self.net.forward(&input, samples.len());
        Ok(cache
            .output()
            .chunks_exact(LATENT_DIM)
            .map(|c| LatentBlock { z: c.try_into().expect("latent width") })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    /// 0 for a dedicated decoder, 1 for a common decoder taking the encoder id.
    pub id_dims: usize,
    pub net: Network,
}

impl DecoderModel {
    pub fn init(id_dims: usize, seed: u64) -> Result<Self> {
        if id_dims > 1 {
            return Err(Error::Config(format!("id_dims must be 0 or 1, got {id_dims}")));
        }
        Ok(Self { id_dims, net: build(&decoder_topology(id_dims), seed, 2) })
    }

    pub fn validate(&self) -> Result<()> {
        check_topology(&self.net, &decoder_topology(self.id_dims))?;
        if !self.net.is_finite() {
            return Err(Error::NonFinite("decoder weights".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        LATENT_DIM + self.id_dims
    }

    /// Writes the decoder input row for `z` into `dst`.
    pub fn fill_input(&self, z: &[f64], encoder_id: Option<u8>, dst: &mut Vec<f64>) -> Result<()> {
        match (self.id_dims, encoder_id) {
            (0, None) => dst.extend_from_slice(z),
            (1, Some(id)) if id <= ID_MAX => {
                dst.extend_from_slice(z);
                dst.push(id_feature(id));
            }
            (0, Some(_)) => {
                return Err(Error::InvalidInput("dedicated decoder called with an encoder id".into()))
            }
            (1, None) => {
                return Err(Error::InvalidInput("common decoder called without an encoder id".into()))
            }
            _ => return Err(Error::InvalidInput(format!("encoder id {encoder_id:?} out of range"))),
        }
        Ok(())
    }

    pub fn decode(&self, z: &LatentBlock, encoder_id: Option<u8>, layer_index: usize) -> Result<BlockSample> {
        Ok(self.decode_batch(&[(z.z, encoder_id)], layer_index)?.remove(0))
    }

    /// Decodes several latents; output rows are renormalised to unit norm.
    pub fn decode_batch(&self, inputs: &[([f64; LATENT_DIM], Option<u8>)], layer_index: usize) -> Result<Vec<BlockSample>> {
        if !self.net.is_finite() {
            return Err(Error::NonFinite("decoder weights".into()));
        }
        let mut buf = Vec::with_capacity(inputs.len() * self.input_len());
        for (z, id) in inputs {
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("decoder input".into()));
            }
            self.fill_input(z, *id, &mut buf)?;
        }
        let cache = self.net.forward(&buf, inputs.len());
        Ok(cache
            .output()
            .chunks_exact(BLOCK_LEN)
            .map(|raw| BlockSample::normalized(raw, layer_index))
            .collect())
    }
}

/// What a `CSMW` file holds.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Encoder(EncoderModel),
    Decoder(DecoderModel),
}

fn write_net<W: Write>(w: &mut LeWriter<W>, net: &Network) -> Result<()> {
    w.u16(net.layers.len() as u16)?;
    for l in &net.layers {
        w.u32(l.rows as u32)?;
        w.u32(l.cols as u32)?;
        for &v in &l.weight {
            w.f32(v as f32)?;
        }
        for &v in &l.bias {
            w.f32(v as f32)?;
        }
    }
    Ok(())
}

/// Layer count (u16), then per layer: rows u32, cols u32, f32 weights, f32 biases.
pub fn write_model<W: Write>(out: W, model: &ModelFile) -> Result<()> {
    let mut w = LeWriter::new(out);
    w.bytes(MODEL_MAGIC)?;
    w.u16(MODEL_VERSION)?;
    match model {
        ModelFile::Encoder(m) => {
            m.validate()?;
            w.u8(m.family.tag())?;
            w.u8(m.encoder_id)?;
            w.u8(0)?;
            write_net(&mut w, &m.net)?;
        }
        ModelFile::Decoder(d) => {
            d.validate()?;
            w.u8(DECODER_FAMILY_TAG)?;
            w.u8(0)?;
            w.u8(d.id_dims as u8)?;
            write_net(&mut w, &d.net)?;
        }
    }
    w.finish()?;
    Ok(())
}

fn read_net<R: Read>(r: &mut LeReader<R>, topology: &[(usize, usize, usize, Activation)]) -> Result<Network> {
    let n = r.u16()? as usize;
    if n != topology.len() {
        return Err(Error::Malformed(format!("{n} layers, expected {}", topology.len())));
    }
    let mut layers = Vec::with_capacity(n);
    for &(rows, cols, groups, activation) in topology {
        let (fr, fc) = (r.u32()? as usize, r.u32()? as usize);
        if (fr, fc) != (rows, cols) {
            return Err(Error::Malformed(format!("layer dims {fr}x{fc}, expected {rows}x{cols}")));
        }
        let weight = r.f32s(rows * cols)?.into_iter().map(f64::from).collect();
        let bias = r.f32s(rows)?.into_iter().map(f64::from).collect();
        layers.push(Dense { rows, cols, weight, bias, groups, activation });
    }
    Ok(Network { layers })
}

pub fn read_model<R: Read>(input: R) -> Result<ModelFile> {
    let mut r = LeReader::new(input);
    r.magic(MODEL_MAGIC)?;
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Version(version));
    }
    let family = r.u8()?;
    let encoder_id = r.u8()?;
    let id_dims = r.u8()? as usize;
    let model = if family == DECODER_FAMILY_TAG {
        if id_dims > 1 {
            return Err(Error::Malformed(format!("id_dims {id_dims}")));
        }
        let d = DecoderModel { id_dims, net: read_net(&mut r, &decoder_topology(id_dims))? };
        d.validate()?;
        ModelFile::Decoder(d)
    } else {
        let family = EncoderFamily::from_tag(family)?;
        if encoder_id > ID_MAX {
            return Err(Error::Malformed(format!("encoder id {encoder_id}")));
        }
        let m = EncoderModel { family, encoder_id, net: read_net(&mut r, &family.topology())? };
        m.validate()?;
        ModelFile::Encoder(m)
    };
    r.expect_eof()?;
    Ok(model)
}
