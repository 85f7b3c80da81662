//! Vendor-boundary bookkeeping.
//!
//! Artifacts move between parties through [`BoundaryLog::transfer`], which
//! only accepts types implementing [`BoundaryArtifact`]. Model types do not
//! implement it, so a weight transfer has to be declared explicitly with
//! [`BoundaryLog::record_weight_transfer`] and always fails the audit.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::ExchangeDataset;
use crate::codec::QuantCodebook;
use crate::error::Result;
use crate::wire::FeedbackMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    /// A UE vendor, named by its encoder id.
    Ue(u8),
    /// The network (gNB) vendor.
    Gnb,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Ue(id) => write!(f, "ue{id}"),
            Party::Gnb => f.write_str("gnb"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    ExchangeDataset,
    QuantCodebook,
    EncoderId,
    FeedbackMessage,
    ModelWeights,
}

impl ArtifactKind {
    pub fn allowed(self) -> bool {
        !matches!(self, ArtifactKind::ModelWeights)
    }
}

/// An encoder id announced across the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderId(pub u8);

pub trait BoundaryArtifact {
    const KIND: ArtifactKind;
    fn describe(&self) -> String;
}

impl BoundaryArtifact for ExchangeDataset {
    const KIND: ArtifactKind = ArtifactKind::ExchangeDataset;
    fn describe(&self) -> String {
        format!("{} records, {}", self.records.len(), self.provenance)
    }
}

impl BoundaryArtifact for QuantCodebook {
    const KIND: ArtifactKind = ArtifactKind::QuantCodebook;
    fn describe(&self) -> String {
        format!("{} levels", self.levels.len())
    }
}

impl BoundaryArtifact for EncoderId {
    const KIND: ArtifactKind = ArtifactKind::EncoderId;
    fn describe(&self) -> String {
        format!("id {}", self.0)
    }
}

impl BoundaryArtifact for FeedbackMessage {
    const KIND: ArtifactKind = ArtifactKind::FeedbackMessage;
    fn describe(&self) -> String {
        format!("model {} ri {}", self.model_id, self.ri)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub from: Party,
    pub to: Party,
    pub kind: ArtifactKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryLog {
    pub crossings: Vec<Crossing>,
}

impl BoundaryLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hands `artifact` from one party to another and records it.
    pub fn transfer<T: BoundaryArtifact>(&mut self, from: Party, to: Party, artifact: T) -> T {
        if from != to {
            self.crossings.push(Crossing { from, to, kind: T::KIND, detail: artifact.describe() });
        }
        artifact
    }

    pub fn record_weight_transfer(&mut self, from: Party, to: Party, detail: impl Into<String>) {
        if from != to {
            self.crossings.push(Crossing { from, to, kind: ArtifactKind::ModelWeights, detail: detail.into() });
        }
    }

    pub fn merge(&mut self, other: &BoundaryLog) {
        self.crossings.extend(other.crossings.iter().cloned());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub crossings: Vec<Crossing>,
    pub violations: Vec<String>,
}

pub fn vendor_boundary_audit(log: &BoundaryLog) -> AuditReport {
    let violations: Vec<String> = log
        .crossings
        .iter()
        .filter(|c| !c.kind.allowed())
        .map(|c| format!("{:?} crossed from {} to {}: {}", c.kind, c.from, c.to, c.detail))
        .collect();
    AuditReport { passed: violations.is_empty(), crossings: log.crossings.clone(), violations }
}

/// Classifies the files handed over in `dir` by their magic bytes.
///
/// `CSIX` and `CSQC` files are allowed crossings; `CSMW` model files and
/// anything unrecognised are violations.
pub fn audit_handover_dir(dir: &Path) -> Result<AuditReport> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    let mut log = BoundaryLog::new();
    let mut violations = Vec::new();
    for e in entries {
        if !e.file_type()?.is_file() {
            continue;
        }
        let name = e.file_name().to_string_lossy().into_owned();
        let bytes = std::fs::read(e.path())?;
        let kind = match bytes.get(..4) {
            Some(b"CSIX") => Some(ArtifactKind::ExchangeDataset),
            Some(b"CSQC") => Some(ArtifactKind::QuantCodebook),
            Some(b"CSMW") => Some(ArtifactKind::ModelWeights),
            _ => None,
        };
        match kind {
            Some(kind) => log.crossings.push(Crossing { from: Party::Gnb, to: Party::Gnb, kind, detail: name }),
            None => violations.push(format!("unrecognised artifact {name}")),
        }
    }
    let mut report = vendor_boundary_audit(&log);
    report.passed &= violations.is_empty();
    report.violations.extend(violations);
    Ok(report)
}
