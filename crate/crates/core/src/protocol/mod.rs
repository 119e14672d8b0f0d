//! Parties, the message layer and the secure exchange protocols.

mod audit;
mod federation;
mod message;
mod transcript;

pub use audit::{audit_transcript, AuditContext, AuditFinding, AuditReport};
pub use federation::{Alice, Bob, EncryptedFeatures, EncryptedKernel, Eve, Federation};
pub use message::{Channel, Message, MessageKind, PartyId, Payload};
pub use transcript::{
    HeaderRecord, MessageRecord, ProtocolTranscript, TranscriptFile, TRANSCRIPT_SCHEMA_VERSION,
};
