//! Transcript persistence as JSON lines: a header record followed by one
//! record per message.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::message::{Message, MessageKind, PartyId, Payload};
use crate::error::{Error, Result};
use crate::ledger::CostLedger;

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ProtocolTranscript {
    pub protocol_name: String,
    pub messages: Vec<Arc<Message>>,
    pub ledger: CostLedger,
}

impl ProtocolTranscript {
    pub fn is_ordered(&self) -> bool {
        self.messages.windows(2).all(|w| w[0].seq < w[1].seq)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>, record_payloads: bool) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = HeaderRecord {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            record: "header".into(),
            protocol: self.protocol_name.clone(),
            message_count: self.messages.len(),
            ledger: self.ledger.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        writeln!(out).map_err(|e| Error::io(path, e))?;
        for m in &self.messages {
            let bytes = m.payload.to_bytes()?;
            let rec = MessageRecord {
                schema_version: TRANSCRIPT_SCHEMA_VERSION,
                record: "message".into(),
                seq: m.seq,
                from: m.from,
                to: m.to,
                kind: m.kind,
                payload_digest: m.payload.digest()?,
                payload_size_bytes: bytes.len(),
                payload: record_payloads.then(|| B64.encode(&bytes)),
            };
            serde_json::to_writer(&mut out, &rec)?;
            writeln!(out).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub schema_version: u32,
    pub record: String,
    pub protocol: String,
    pub message_count: usize,
    pub ledger: CostLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub schema_version: u32,
    pub record: String,
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: MessageKind,
    pub payload_digest: String,
    pub payload_size_bytes: usize,
    /// Base64 of the payload bytes, present only when payloads were recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl MessageRecord {
    /// Decodes the embedded payload and checks it against the digest.
    pub fn decode_payload(&self) -> Result<Option<Payload>> {
        let Some(encoded) = &self.payload else {
            return Ok(None);
        };
        let bytes = B64
            .decode(encoded)
            .map_err(|e| Error::Protocol(format!("message {}: bad base64: {e}", self.seq)))?;
        let payload = Payload::from_bytes(&bytes)?;
        if payload.digest()? != self.payload_digest {
            return Err(Error::Protocol(format!("message {}: payload digest mismatch", self.seq)));
        }
        Ok(Some(payload))
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptFile {
    pub header: HeaderRecord,
    pub messages: Vec<MessageRecord>,
}

impl TranscriptFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Protocol(format!("{}: empty transcript", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: HeaderRecord = serde_json::from_str(&first)?;
        check_version(header.schema_version)?;
        let mut messages = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MessageRecord = serde_json::from_str(&line)?;
            check_version(rec.schema_version)?;
            messages.push(rec);
        }
        Ok(TranscriptFile { header, messages })
    }

    /// Rebuilds the in-memory transcript. Requires recorded payloads.
    pub fn into_transcript(self) -> Result<ProtocolTranscript> {
        let messages = self
            .messages
            .iter()
            .map(|r| {
                let payload = r.decode_payload()?.ok_or_else(|| {
                    Error::Protocol(format!("message {} was stored without its payload", r.seq))
                })?;
                Ok(Arc::new(Message {
                    seq: r.seq,
                    from: r.from,
                    to: r.to,
                    kind: r.kind,
                    payload,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProtocolTranscript {
            protocol_name: self.header.protocol,
            messages,
            ledger: self.header.ledger,
        })
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != TRANSCRIPT_SCHEMA_VERSION {
        return Err(Error::Protocol(format!("unsupported transcript schema version {v}")));
    }
    Ok(())
}
