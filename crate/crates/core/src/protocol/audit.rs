//! Post-hoc check that no party's plaintext features crossed a boundary.
//!
//! Rules:
//! * Alice and Bob may send public keys, parameters and ciphertexts, never
//!   raw plaintext vectors.
//! * No plaintext payload from anyone may contain a party's feature row.
//! * Ciphertexts sent to Eve are readable by Eve, so they are violations
//!   unless they are the per-iteration gradient aggregate, which the
//!   training protocol reveals to Eve by design. Those are listed separately.

use serde::Serialize;

use super::message::{MessageKind, PartyId, Payload};
use super::transcript::ProtocolTranscript;
use crate::dataset::VerticalSplit;

/// The feature rows the auditor searches for.
#[derive(Debug, Clone, Default)]
pub struct AuditContext {
    pub rows: Vec<(PartyId, usize, Vec<f64>)>,
}

impl AuditContext {
    pub fn from_split(split: &VerticalSplit) -> Self {
        let mut rows = Vec::new();
        for (party, x) in [(PartyId::Alice, &split.alice_x), (PartyId::Bob, &split.bob_x)] {
            for i in 0..x.nrows() {
                rows.push((party, i, x.row(i).iter().copied().collect()));
            }
        }
        AuditContext { rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditFinding {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: MessageKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub protocol: String,
    pub messages_checked: usize,
    pub findings: Vec<AuditFinding>,
    /// Messages allowed by the gradient exception.
    pub whitelisted: Vec<AuditFinding>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

fn contains_row(haystack: &[f64], row: &[f64]) -> bool {
    !row.is_empty() && haystack.windows(row.len()).any(|w| w == row)
}

pub fn audit_transcript(t: &ProtocolTranscript, ctx: &AuditContext) -> AuditReport {
    let mut findings = Vec::new();
    let mut whitelisted = Vec::new();
    let mut last_seq = None;

    for m in &t.messages {
        let flag = |reason: String| AuditFinding {
            seq: m.seq,
            from: m.from,
            to: m.to,
            kind: m.kind,
            reason,
        };
        if last_seq.is_some_and(|s| m.seq <= s) {
            findings.push(flag("sequence number not increasing".into()));
        }
        last_seq = Some(m.seq);

        match &m.payload {
            Payload::Plain(values) => {
                if matches!(m.from, PartyId::Alice | PartyId::Bob) {
                    findings.push(flag(format!("plaintext vector sent by {}", m.from)));
                }
                for (owner, i, row) in &ctx.rows {
                    if contains_row(values, row) {
                        findings.push(flag(format!("contains {owner}'s feature row {i}")));
                        break;
                    }
                }
            }
            Payload::Ciphertexts(_) if m.to == PartyId::Eve => {
                if m.kind == MessageKind::EncryptedGradient {
                    whitelisted.push(flag("gradient aggregate decrypted by eve".into()));
                } else {
                    findings.push(flag("ciphertexts readable by eve".into()));
                }
            }
            Payload::Ciphertexts(_) | Payload::PublicKey(_) | Payload::Params(_) => {}
        }
    }

    AuditReport {
        protocol: t.protocol_name.clone(),
        messages_checked: t.messages.len(),
        findings,
        whitelisted,
    }
}
