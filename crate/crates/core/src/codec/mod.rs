//! Desk-scale neural CSI codec: block samples, the shared latent quantiser,
//! encoder/decoder networks with hand-derived gradients, and training steps.

mod block;
mod model;
mod net;
mod optim;
mod quant;
mod train;

pub use block::{assemble_layer, block_loss, blocks_from_report, BlockSample};
pub use model::{
    id_feature, read_model, write_model, DecoderModel, EncoderFamily, EncoderModel, LatentBlock,
    ModelFile, ID_MAX,
};
pub use net::{Activation, Dense, ForwardCache, Gradients, Network};
pub use optim::{Adam, AdamConfig};
pub use quant::{
    dequantize, quantize, quantize_counting, read_codebook, write_codebook, QuantCodebook,
    QuantStats, QuantizedBlock,
};
pub(crate) use net::seeded_rng;
pub(crate) use quant::{read_codebook_block, write_codebook_block};
pub use train::{
    decoder_loss_grads, distill_loss_grads, e2e_loss_grads, Autoencoder, DecoderInput,
    DecoderTrainer, EncoderDistiller, DISTILL_SHARPNESS,
};
