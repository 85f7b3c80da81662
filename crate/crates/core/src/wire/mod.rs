//! Bit-exact feedback messages, stream framing, transports and the link
//! emulator.

mod emulator;
mod frame;
mod message;
mod transport;

pub use emulator::{
    emulate_link, run_gnb, run_ue, Direction, GnbConfig, RegisteredDecoder, SessionLog,
    SessionRecord, TickOutcome, UeConfig,
};
pub use frame::{
    decode_frames, read_frame, write_frame, AckStatus, FrameKind, LinkMessage, WireFrame,
    FRAME_HEADER_BYTES,
};
pub use message::{
    assemble_report, disassemble_report, pack, packed_len, unpack, FeedbackMessage, BLOCK_BYTES,
    HEADER_BYTES, LAYER_BYTES,
};
pub use transport::{connect, inproc_pair, Duplex, InprocEnd, TransportKind};
