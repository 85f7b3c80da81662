//! Vendor-split training protocols and the boundary audit.
//!
//! A UE vendor owns an encoder (and, privately, a proxy decoder); the network
//! vendor owns the decoder. Only exchange datasets, the quantiser codebook,
//! encoder ids and feedback messages cross between them.

mod audit;
mod dataset;
mod protocol;

pub use audit::{
    audit_handover_dir, vendor_boundary_audit, ArtifactKind, AuditReport, BoundaryArtifact,
    BoundaryLog, Crossing, EncoderId, Party,
};
pub use dataset::{provenance, read_exchange, write_exchange, ExchangeDataset, ExchangeRecord};
pub use protocol::{
    distill_ue_encoder, evaluate_chain, evaluate_decoder, export_exchange_dataset,
    gnb_first_stage1, split_blocks, split_records, train_common_decoder, train_dedicated_decoder,
    train_end_to_end, train_gnb_first, E2eOutcome, GnbFirstOutcome, GnbStage1, Method,
    TrainConfig, TrainReport, PROXY_ENCODER_ID,
};
