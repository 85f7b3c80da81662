//! Interoperable, confidentiality-preserving CSI feedback compression.
//!
//! The crate is organised the way the feedback link is:
//!
//! * [`channel`] synthesises frequency-selective MIMO channels.
//! * [`linalg`] and [`csi`] hold the classical precoding math: eigen
//!   precoders, SGCS, re-orthogonalisation, closed-loop capacity and the
//!   wideband DFT codebook baseline.
//! * [`codec`] contains the small encoder/decoder networks, the shared 2-bit
//!   latent quantiser and the optimiser.
//! * [`interop`] implements the vendor-split training protocols and the
//!   boundary audit.
//! * [`wire`] is the bit-exact feedback message codec and the two-endpoint
//!   link emulator.
//! * [`experiment`] orchestrates full runs and writes result tables.

pub mod channel;
pub mod codec;
pub mod csi;
pub mod error;
pub mod experiment;
pub mod interop;
pub mod linalg;
pub mod pipeline;
pub mod wire;

mod binio;

pub use num_complex::Complex64;

pub use channel::{ChannelRealization, ScenarioConfig};
pub use codec::{
    BlockSample, DecoderModel, EncoderFamily, EncoderModel, LatentBlock, QuantCodebook,
    QuantizedBlock,
};
pub use csi::{DftCodebook, PrecoderReport};
pub use error::{Error, Result};
pub use interop::{ExchangeDataset, ExchangeRecord, TrainReport};
pub use wire::FeedbackMessage;

/// Transmit antennas at the base station.
pub const N_TX: usize = 8;
/// Receive antennas at the UE.
pub const N_RX: usize = 4;
/// Effective sub-bands after duplication.
pub const N_SUBBANDS: usize = 70;
/// Measured sub-bands before duplication.
pub const N_PHYSICAL_SUBBANDS: usize = 68;
/// Sub-bands processed by one encoder inference.
pub const BLOCK_SUBBANDS: usize = 14;
/// Encoder blocks per layer.
pub const N_BLOCKS: usize = N_SUBBANDS / BLOCK_SUBBANDS;
/// Maximum number of MIMO layers.
pub const MAX_LAYERS: usize = 4;
/// Latent values per (layer, block).
pub const LATENT_DIM: usize = 64;
/// Quantiser bits per latent value.
pub const BITS_PER_DIM: usize = 2;
/// Bits per coefficient of the uncompressed precoder report.
pub const RAW_COEFF_BITS: usize = 16;
/// Real values in one block sample (14 sub-bands x 8 antennas x re/im).
pub const BLOCK_LEN: usize = BLOCK_SUBBANDS * N_TX * 2;

/// Bits of the uncompressed report: tx x sub-bands x re/im x 16 bits x layers.
pub const fn raw_report_bits(layers: usize) -> usize {
    N_TX * N_SUBBANDS * 2 * RAW_COEFF_BITS * layers
}

/// Compressed payload bits carried for `layers` layers.
pub const fn payload_bits(layers: usize) -> usize {
    layers * N_BLOCKS * LATENT_DIM * BITS_PER_DIM
}

/// Encoder inferences needed for a report with `layers` layers.
pub const fn encoder_inferences(layers: usize) -> usize {
    layers * N_BLOCKS
}

/// Checks the bit-budget identities the whole link relies on.
///
/// Returns the compression ratio at full rank when they hold.
pub fn check_bit_budget() -> Result<usize> {
    let raw = raw_report_bits(MAX_LAYERS);
    let payload = payload_bits(MAX_LAYERS);
    if !N_SUBBANDS.is_multiple_of(BLOCK_SUBBANDS) || !raw.is_multiple_of(payload) || BLOCK_LEN != 224 {
        return Err(Error::Config(format!(
            "inconsistent bit budget: raw {raw} bits, payload {payload} bits"
        )));
    }
    Ok(raw / payload)
}
