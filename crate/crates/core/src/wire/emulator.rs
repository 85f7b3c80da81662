//! Two-endpoint link emulator: a gNB triggers CSI reports once per logical
//! tick, the UE answers with a packed report, and the gNB decodes it and
//! acknowledges with the resulting precoder quality.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::frame::{read_frame, write_frame, AckStatus, FrameKind, LinkMessage, WireFrame};
use super::message::{assemble_report, disassemble_report};
use super::transport::{connect, Duplex, TransportKind};
use crate::channel::ChannelRealization;
use crate::codec::{DecoderModel, EncoderModel, QuantCodebook};
use crate::csi::extract_precoders;
use crate::error::{Error, Result};
use crate::pipeline::{cqi, gnb_reconstruct, link_metrics, ue_encode};
use crate::MAX_LAYERS;

pub struct UeConfig {
    pub encoder: EncoderModel,
    pub codebook: QuantCodebook,
    /// Model id announced in every report.
    pub model_id: u8,
    pub ri: usize,
    pub snr_db: f64,
}

/// A decoder the gNB can dispatch reports to.
pub struct RegisteredDecoder {
    pub decoder: DecoderModel,
    /// Id fed to a common decoder; `None` for a dedicated one.
    pub decoder_id: Option<u8>,
}

pub struct GnbConfig {
    pub registry: BTreeMap<u8, RegisteredDecoder>,
    pub codebook: QuantCodebook,
    pub snr_db: f64,
    pub ticks: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    GnbToUe,
    UeToGnb,
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub tick: u32,
    pub direction: Direction,
    pub kind: FrameKind,
    pub frame_bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ri: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cqi: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_bits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<AckStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_sgcs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

impl SessionRecord {
    fn new(tick: u32, direction: Direction, frame: &WireFrame) -> Self {
        Self {
            tick,
            direction,
            kind: frame.kind,
            frame_bytes: frame.encoded_len(),
            realization_id: None,
            model_id: None,
            ri: None,
            cqi: None,
            payload_bits: None,
            status: None,
            layer_sgcs: None,
            capacity: None,
        }
    }
}

/// Outcome of one tick as seen by the gNB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickOutcome {
    pub tick: u32,
    pub realization_id: u64,
    pub decoded: bool,
    pub layer_sgcs: Vec<f64>,
    pub capacity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub records: Vec<SessionRecord>,
}

impl SessionLog {
    pub fn ticks(&self) -> Vec<TickOutcome> {
        let mut triggers = BTreeMap::new();
        let mut out = Vec::new();
        for r in &self.records {
            match (r.kind, r.realization_id) {
                (FrameKind::CsiTrigger, Some(id)) => {
                    triggers.insert(r.tick, id);
                }
                (FrameKind::PrecoderAck, _) => out.push(TickOutcome {
                    tick: r.tick,
                    realization_id: triggers.get(&r.tick).copied().unwrap_or(u64::MAX),
                    decoded: r.status == Some(AckStatus::Ok),
                    layer_sgcs: r.layer_sgcs.clone().unwrap_or_default(),
                    capacity: r.capacity.unwrap_or(0.0),
                }),
                _ => {}
            }
        }
        out
    }

    pub fn nack_count(&self) -> usize {
        self.records.iter().filter(|r| r.status == Some(AckStatus::Nack)).count()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn channel_for(channels: &[ChannelRealization], id: u64) -> Result<&ChannelRealization> {
    channels
        .iter()
        .find(|c| c.realization_id == id)
        .ok_or_else(|| Error::Link(format!("no channel with realization id {id}")))
}

fn recv(stream: &mut dyn Duplex) -> Result<Option<(WireFrame, LinkMessage)>> {
    match read_frame(stream)? {
        Some(frame) => {
            let msg = LinkMessage::from_frame(&frame)?;
            Ok(Some((frame, msg)))
        }
        None => Ok(None),
    }
}

/// UE event loop: answers triggers until the gNB closes the stream.
pub fn run_ue(cfg: &UeConfig, channels: &[ChannelRealization], stream: &mut dyn Duplex) -> Result<usize> {
    if !(1..=MAX_LAYERS).contains(&cfg.ri) {
        return Err(Error::Config(format!("ri {}", cfg.ri)));
    }
    let mut reports = 0;
    while let Some((_, msg)) = recv(stream)? {
        match msg {
            LinkMessage::Trigger { tick, realization_id } => {
                let h = channel_for(channels, realization_id)?;
                let report = extract_precoders(h, cfg.ri)?;
                let latents = ue_encode(&cfg.encoder, &cfg.codebook, &report, cfg.ri)?;
                let msg = assemble_report(&latents, cfg.model_id, cqi(&report, cfg.snr_db))?;
                write_frame(stream, &LinkMessage::Report { tick, msg }.to_frame()?)?;
                reports += 1;
            }
            LinkMessage::Ack { .. } => {}
            LinkMessage::Report { .. } => return Err(Error::Link("UE received a CSI report".into())),
        }
    }
    stream.close();
    Ok(reports)
}

/// gNB event loop: one trigger per tick, realization `tick % channels.len()`.
pub fn run_gnb(cfg: &GnbConfig, channels: &[ChannelRealization], stream: &mut dyn Duplex) -> Result<SessionLog> {
    if channels.is_empty() {
        return Err(Error::InsufficientData("no channels for the session".into()));
    }
    let mut log = SessionLog::default();
    for tick in 0..cfg.ticks {
        let h = &channels[tick as usize % channels.len()];
        let trigger = LinkMessage::Trigger { tick, realization_id: h.realization_id }.to_frame()?;
        write_frame(stream, &trigger)?;
        let mut rec = SessionRecord::new(tick, Direction::GnbToUe, &trigger);
        rec.realization_id = Some(h.realization_id);
        log.records.push(rec);

        let (frame, msg) = recv(stream)
            .map_err(|e| Error::Link(format!("tick {tick}: {e}")))?
            .ok_or_else(|| Error::Link(format!("tick {tick}: UE closed the link")))?;
        let LinkMessage::Report { tick: rtick, msg } = msg else {
            return Err(Error::Link(format!("tick {tick}: expected a CSI report, got {:?}", frame.kind)));
        };
        if rtick != tick {
            return Err(Error::Link(format!("tick {tick}: report for tick {rtick}")));
        }
        let mut rec = SessionRecord::new(tick, Direction::UeToGnb, &frame);
        rec.model_id = Some(msg.model_id);
        rec.ri = Some(msg.ri);
        rec.cqi = Some(msg.cqi);
        rec.payload_bits = Some(msg.payload_bits());
        log.records.push(rec);

        let ack = match cfg.registry.get(&msg.model_id) {
            Some(reg) => {
                let latents = disassemble_report(&msg)?;
                let w = gnb_reconstruct(&reg.decoder, &cfg.codebook, &latents, reg.decoder_id)?;
                let truth = extract_precoders(h, msg.ri as usize)?;
                let m = link_metrics(h, &truth, &w, cfg.snr_db)?;
                LinkMessage::Ack { tick, status: AckStatus::Ok, layer_sgcs: m.layer_sgcs, capacity: m.capacity }
            }
            None => {
                log::warn!("tick {tick}: {}", Error::UnknownModel(msg.model_id));
                LinkMessage::Ack { tick, status: AckStatus::Nack, layer_sgcs: Vec::new(), capacity: 0.0 }
            }
        };
        let frame = ack.to_frame()?;
        write_frame(stream, &frame)?;
        let mut rec = SessionRecord::new(tick, Direction::GnbToUe, &frame);
        if let LinkMessage::Ack { status, layer_sgcs, capacity, .. } = ack {
            rec.status = Some(status);
            if status == AckStatus::Ok {
                rec.layer_sgcs = Some(layer_sgcs);
                rec.capacity = Some(capacity);
            }
        }
        log.records.push(rec);
    }
    stream.close();
    Ok(log)
}

/// Runs both endpoints, the UE on its own thread, over `transport`.
pub fn emulate_link(
    ue: &UeConfig,
    gnb: &GnbConfig,
    channels: &[ChannelRealization],
    transport: TransportKind,
) -> Result<SessionLog> {
    let (mut gnb_end, mut ue_end) = connect(transport)?;
    std::thread::scope(|s| {
        let ue_thread = s.spawn(move || run_ue(ue, channels, ue_end.as_mut()));
        let log = run_gnb(gnb, channels, gnb_end.as_mut());
        // Unblock the UE if the gNB stopped early.
        drop(gnb_end);
        let ue_result = ue_thread.join().map_err(|_| Error::Link("UE endpoint panicked".into()))?;
        let log = log?;
        ue_result.map_err(|e| Error::Link(format!("UE endpoint: {e}")))?;
        Ok(log)
    })
}
