//! Length-prefixed framing: `u16` body length (little-endian), `u8` kind,
//! body.

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use super::message::{pack, unpack, FeedbackMessage};
use crate::error::{Error, Result};
use crate::MAX_LAYERS;

pub const FRAME_HEADER_BYTES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    CsiTrigger = 1,
    CsiReport = 2,
    PrecoderAck = 3,
}

impl FrameKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(FrameKind::CsiTrigger),
            2 => Ok(FrameKind::CsiReport),
            3 => Ok(FrameKind::PrecoderAck),
            _ => Err(Error::Malformed(format!("unknown frame kind {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub kind: FrameKind,
    pub body: Vec<u8>,
}

impl WireFrame {
    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_BYTES + self.body.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let len = u16::try_from(self.body.len())
            .map_err(|_| Error::InvalidInput(format!("frame body of {} bytes", self.body.len())))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&len.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.body);
        Ok(out)
    }
}

/// Splits a complete buffer into frames.
pub fn decode_frames(mut buf: &[u8]) -> Result<Vec<WireFrame>> {
    let mut frames = Vec::new();
    while !buf.is_empty() {
        if buf.len() < FRAME_HEADER_BYTES {
            return Err(Error::Truncated { needed: FRAME_HEADER_BYTES, got: buf.len() });
        }
        let len = u16::from_le_bytes([buf[0], buf[1]]) as usize;
        let kind = FrameKind::from_u8(buf[2])?;
        let end = FRAME_HEADER_BYTES + len;
        if buf.len() < end {
            return Err(Error::Truncated { needed: end, got: buf.len() });
        }
        frames.push(WireFrame { kind, body: buf[FRAME_HEADER_BYTES..end].to_vec() });
        buf = &buf[end..];
    }
    Ok(frames)
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &WireFrame) -> Result<()> {
    w.write_all(&frame.encode()?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `None` on a clean end of stream between frames.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<WireFrame>> {
    let mut header = [0u8; FRAME_HEADER_BYTES];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Truncated { needed: FRAME_HEADER_BYTES, got }),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u16::from_le_bytes([header[0], header[1]]) as usize;
    let kind = FrameKind::from_u8(header[2])?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncated { needed: FRAME_HEADER_BYTES + len, got: FRAME_HEADER_BYTES },
        _ => Error::Io(e),
    })?;
    Ok(Some(WireFrame { kind, body }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Ok = 0,
    /// No decoder registered for the report's model id.
    Nack = 1,
}

/// Typed view of a frame body.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkMessage {
    Trigger { tick: u32, realization_id: u64 },
    Report { tick: u32, msg: FeedbackMessage },
    Ack { tick: u32, status: AckStatus, layer_sgcs: Vec<f64>, capacity: f64 },
}

impl LinkMessage {
    pub fn tick(&self) -> u32 {
        match self {
            LinkMessage::Trigger { tick, .. } | LinkMessage::Report { tick, .. } | LinkMessage::Ack { tick, .. } => *tick,
        }
    }

    pub fn to_frame(&self) -> Result<WireFrame> {
        let mut body = Vec::new();
        let kind = match self {
            LinkMessage::Trigger { tick, realization_id } => {
                body.extend_from_slice(&realization_id.to_le_bytes());
                body.extend_from_slice(&tick.to_le_bytes());
                FrameKind::CsiTrigger
            }
            LinkMessage::Report { tick, msg } => {
                body.extend_from_slice(&tick.to_le_bytes());
                body.extend(pack(msg)?);
                FrameKind::CsiReport
            }
            LinkMessage::Ack { tick, status, layer_sgcs, capacity } => {
                if layer_sgcs.len() > MAX_LAYERS {
                    return Err(Error::InvalidInput(format!("{} layers in ack", layer_sgcs.len())));
                }
                body.extend_from_slice(&tick.to_le_bytes());
                body.push(*status as u8);
                body.push(layer_sgcs.len() as u8);
                for s in layer_sgcs {
                    body.extend_from_slice(&s.to_le_bytes());
                }
                body.extend_from_slice(&capacity.to_le_bytes());
                FrameKind::PrecoderAck
            }
        };
        Ok(WireFrame { kind, body })
    }

    pub fn from_frame(frame: &WireFrame) -> Result<Self> {
        let b = &frame.body;
        let need = |n: usize| -> Result<()> {
            if b.len() < n {
                Err(Error::Truncated { needed: n, got: b.len() })
            } else {
                Ok(())
            }
        };
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"));
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let exact = |n: usize| -> Result<()> {
            need(n)?;
            if b.len() > n {
                return Err(Error::Malformed(format!("{} trailing bytes in {:?} frame", b.len() - n, frame.kind)));
            }
            Ok(())
        };
        match frame.kind {
            FrameKind::CsiTrigger => {
                exact(12)?;
                Ok(LinkMessage::Trigger {
                    realization_id: u64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
                    tick: u32_at(8),
                })
            }
            FrameKind::CsiReport => {
                need(4)?;
                Ok(LinkMessage::Report { tick: u32_at(0), msg: unpack(&b[4..])? })
            }
            FrameKind::PrecoderAck => {
                need(6)?;
                let status = match b[4] {
                    0 => AckStatus::Ok,
                    1 => AckStatus::Nack,
                    s => return Err(Error::Malformed(format!("ack status {s}"))),
                };
                let n = b[5] as usize;
                if n > MAX_LAYERS {
                    return Err(Error::Malformed(format!("{n} layers in ack")));
                }
                exact(6 + 8 * n + 8)?;
                Ok(LinkMessage::Ack {
                    tick: u32_at(0),
                    status,
                    layer_sgcs: (0..n).map(|i| f64_at(6 + 8 * i)).collect(),
                    capacity: f64_at(6 + 8 * n),
                })
            }
        }
    }
}
