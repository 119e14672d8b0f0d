use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::he::{PublicKey, TrackedCiphertext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyId {
    Alice,
    Bob,
    Eve,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyId::Alice => "alice",
            PartyId::Bob => "bob",
            PartyId::Eve => "eve",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    PublicKey,
    /// Protocol parameters such as gamma or the learning rate.
    Params,
    EncryptedRows,
    KernelShares,
    EncryptedModel,
    EncryptedGradient,
    /// Anything else; only hand-built transcripts use it.
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Payload {
    PublicKey(PublicKey),
    Ciphertexts(Vec<TrackedCiphertext>),
    Params(BTreeMap<String, f64>),
    Plain(Vec<f64>),
}

impl Payload {
    pub fn params<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Payload::Params(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    /// Canonical byte encoding used for digests and payload embedding.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: MessageKind,
    pub payload: Payload,
}

impl Message {
    pub fn ciphertexts(&self) -> Result<&[TrackedCiphertext]> {
        match &self.payload {
            Payload::Ciphertexts(c) => Ok(c),
            _ => Err(self.unexpected("ciphertexts")),
        }
    }

    pub fn params(&self) -> Result<&BTreeMap<String, f64>> {
        match &self.payload {
            Payload::Params(p) => Ok(p),
            _ => Err(self.unexpected("parameters")),
        }
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        self.params()?
            .get(name)
            .copied()
            .ok_or_else(|| Error::Protocol(format!("message {} lacks parameter `{name}`", self.seq)))
    }

    pub fn public_key(&self) -> Result<PublicKey> {
        match &self.payload {
            Payload::PublicKey(k) => Ok(*k),
            _ => Err(self.unexpected("a public key")),
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        Error::Protocol(format!(
            "message {} ({:?} {} -> {}) does not carry {wanted}",
            self.seq, self.kind, self.from, self.to
        ))
    }
}

#[derive(Debug, Default)]
struct ChannelState {
    next_seq: u64,
    log: Vec<Arc<Message>>,
    inboxes: HashMap<PartyId, VecDeque<Arc<Message>>>,
}

/// In-process ordered, reliable channel. Every message gets the next
/// sequence number and is appended to the run's log.
#[derive(Debug, Default)]
pub struct Channel {
    state: Mutex<ChannelState>,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&self, from: PartyId, to: PartyId, kind: MessageKind, payload: Payload) -> u64 {
        assert_ne!(from, to, "a party cannot message itself");
        let mut st = self.state.lock().expect("channel poisoned");
        st.next_seq += 1;
        let msg = Arc::new(Message {
            seq: st.next_seq,
            from,
            to,
            kind,
            payload,
        });
        st.log.push(Arc::clone(&msg));
        st.inboxes.entry(to).or_default().push_back(msg);
        st.next_seq
    }

    /// Next message addressed to `to`, which must be of kind `kind`.
    pub fn recv(&self, to: PartyId, kind: MessageKind) -> Result<Arc<Message>> {
        let mut st = self.state.lock().expect("channel poisoned");
        let msg = st
            .inboxes
            .get_mut(&to)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::Protocol(format!("{to} expected {kind:?} but its inbox is empty")))?;
        if msg.kind != kind {
            return Err(Error::Protocol(format!(
                "{to} expected {kind:?} but message {} is {:?}",
                msg.seq, msg.kind
            )));
        }
        Ok(msg)
    }

    pub fn log(&self) -> Vec<Arc<Message>> {
        self.state.lock().expect("channel poisoned").log.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("channel poisoned").log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_increases_and_inboxes_are_fifo() {
        let ch = Channel::new();
        let a = ch.send(PartyId::Bob, PartyId::Alice, MessageKind::Params, Payload::params([("gamma", 1.0)]));
        let b = ch.send(PartyId::Eve, PartyId::Alice, MessageKind::Other, Payload::Plain(vec![1.0]));
        assert!(b > a);
        assert_eq!(ch.recv(PartyId::Alice, MessageKind::Params).unwrap().param("gamma").unwrap(), 1.0);
        assert!(ch.recv(PartyId::Alice, MessageKind::Params).is_err());
        assert!(ch.recv(PartyId::Alice, MessageKind::Other).is_err());
        assert_eq!(ch.len(), 2);
    }

    #[test]
    fn payload_bytes_round_trip() {
        let p = Payload::Plain(vec![0.1, -2.5]);
        assert_eq!(Payload::from_bytes(&p.to_bytes().unwrap()).unwrap(), p);
        assert_eq!(p.digest().unwrap().len(), 64);
    }
}
