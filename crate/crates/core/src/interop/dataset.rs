use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::binio::{LeReader, LeWriter};
use crate::codec::{
    read_codebook_block, write_codebook_block, BlockSample, DecoderInput, QuantCodebook,
};
use crate::error::{Error, Result};
use crate::{BLOCK_LEN, BLOCK_SUBBANDS, LATENT_DIM, MAX_LAYERS, N_TX};

const EXCHANGE_MAGIC: &[u8; 4] = b"CSIX";
const EXCHANGE_VERSION: u16 = 1;

/// One (dequantised latent, target block) pair. Values are stored at file
/// precision so a dataset survives a file round trip unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeRecord {
    pub dequantized_latent: [f32; LATENT_DIM],
    pub target_block: [f32; BLOCK_LEN],
    pub layer_index: u8,
    pub encoder_id: u8,
}

impl ExchangeRecord {
    pub fn target(&self) -> BlockSample {
        BlockSample {
            x: self.target_block.map(f64::from),
            layer_index: self.layer_index as usize,
        }
    }

    pub fn latent(&self) -> [f64; LATENT_DIM] {
        self.dequantized_latent.map(f64::from)
    }

    /// The decoder training example; `with_id` selects the common-decoder
    /// input form.
    pub fn decoder_input(&self, with_id: bool) -> DecoderInput {
        DecoderInput {
            latent: self.latent(),
            encoder_id: with_id.then_some(self.encoder_id),
            target: self.target(),
        }
    }
}

/// Everything a UE vendor hands to the network vendor.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeDataset {
    /// Realization-major, then layer, then block.
    pub records: Vec<ExchangeRecord>,
    pub codebook: QuantCodebook,
    pub encoder_ids_present: BTreeSet<u8>,
    pub provenance: String,
}

impl ExchangeDataset {
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::InsufficientData("exchange dataset has no records".into()));
        }
        self.codebook.validate()?;
        let ids: BTreeSet<u8> = self.records.iter().map(|r| r.encoder_id).collect();
        if ids != self.encoder_ids_present {
            return Err(Error::InvalidInput("encoder id set does not match the records".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.layer_index as usize >= MAX_LAYERS {
                return Err(Error::InvalidInput(format!("record {i}: layer {}", r.layer_index)));
            }
            if let Some(v) = r.dequantized_latent.iter().find(|&&v| !self.codebook.is_level(v as f64)) {
                return Err(Error::InvalidInput(format!("record {i}: latent {v} is not a codebook level")));
            }
        }
        Ok(())
    }

    /// The single encoder id, or an error if the dataset mixes vendors.
    pub fn single_encoder_id(&self) -> Result<u8> {
        match self.encoder_ids_present.iter().collect::<Vec<_>>().as_slice() {
            [id] => Ok(**id),
            [] => Err(Error::InsufficientData("exchange dataset has no records".into())),
            _ => Err(Error::InvalidInput(format!(
                "dataset holds encoder ids {:?}; use common-decoder training",
                self.encoder_ids_present
            ))),
        }
    }

    /// Records per realization, assuming every realization contributes the
    /// same layer count.
    pub fn group_len(&self) -> usize {
        let layers = self.records.iter().map(|r| r.layer_index as usize + 1).max().unwrap_or(1);
        layers * crate::N_BLOCKS
    }
}

/// Header, embedded codebook, then one record per entry. Datasets holding
/// several encoder ids cannot be written.
pub fn write_exchange<W: Write>(out: W, ds: &ExchangeDataset) -> Result<()> {
    ds.validate()?;
    let id = ds.single_encoder_id()?;
    let mut w = LeWriter::new(out);
    w.bytes(EXCHANGE_MAGIC)?;
    w.u16(EXCHANGE_VERSION)?;
    w.u16(id as u16)?;
    w.u16(LATENT_DIM as u16)?;
    w.u16(BLOCK_SUBBANDS as u16)?;
    w.u16(N_TX as u16)?;
    w.u32(ds.records.len() as u32)?;
    write_codebook_block(&mut w, &ds.codebook)?;
    for r in &ds.records {
        w.f32s(&r.dequantized_latent)?;
        w.f32s(&r.target_block)?;
        w.u8(r.layer_index)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_exchange<R: Read>(input: R) -> Result<ExchangeDataset> {
    let mut r = LeReader::new(input);
    r.magic(EXCHANGE_MAGIC)?;
    let version = r.u16()?;
    if version != EXCHANGE_VERSION {
        return Err(Error::Version(version));
    }
    let id = r.u16()?;
    let dims = (r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
    if dims != (LATENT_DIM, BLOCK_SUBBANDS, N_TX) {
        return Err(Error::Malformed(format!("unsupported record dimensions {dims:?}")));
    }
    let id = u8::try_from(id)
        .ok()
        .filter(|&i| i <= crate::codec::ID_MAX)
        .ok_or_else(|| Error::Malformed(format!("encoder id {id}")))?;
    let count = r.u32()? as usize;
    let codebook = read_codebook_block(&mut r)?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        records.push(ExchangeRecord {
            dequantized_latent: r.f32_array()?,
            target_block: r.f32_array()?,
            layer_index: r.u8()?,
            encoder_id: id,
        });
    }
    r.expect_eof()?;
    let ds = ExchangeDataset {
        records,
        codebook,
        encoder_ids_present: BTreeSet::from([id]),
        provenance: provenance(id),
    };
    ds.validate()?;
    Ok(ds)
}

/// Provenance string of a single-encoder dataset.
pub fn provenance(encoder_id: u8) -> String {
    format!("encoder {encoder_id}")
}
