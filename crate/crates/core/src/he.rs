//! Simulated leveled homomorphic encryption.
//!
//! A [`TrackedCiphertext`] carries its plaintext slots in the clear together
//! with the multiplicative depth it has consumed and the key it is bound to.
//! Arithmetic is exact `f64` arithmetic, so decrypting any expression equals
//! evaluating the same expression in plaintext. The leveled constraints of a
//! real scheme are enforced structurally: every product consumes one level,
//! no result may exceed the key's depth budget, and operands must share a key.
//!
//! The [`LeveledHe`] trait is the surface the protocols use, so a lattice
//! backend can stand in for [`TrackedBackend`] later.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{ceil_log2, Ledger, OpKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyId(pub u64);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

/// Public half of a key pair. Encrypting requires only this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub key_id: KeyId,
    pub depth_budget: u32,
}

/// Full key pair held by the decrypting party.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    public: PublicKey,
}

impl KeyPair {
    pub fn key_id(&self) -> KeyId {
        self.public.key_id
    }

    pub fn depth_budget(&self) -> u32 {
        self.public.depth_budget
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainVector {
    values: Vec<f64>,
}

impl PlainVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("plain vector must not be empty".into()));
        }
        Ok(PlainVector { values })
    }

    pub fn scalar(value: f64) -> Self {
        PlainVector {
            values: vec![value],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        PlainVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for PlainVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        PlainVector::new(values)
    }
}

impl TryFrom<&[f64]> for PlainVector {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        PlainVector::new(values.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedCiphertext {
    payload: Vec<f64>,
    depth: u32,
    key_id: KeyId,
    budget: u32,
}

impl TrackedCiphertext {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    /// Number of slots.
    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    /// Levels still available before the budget is reached.
    pub fn remaining_depth(&self) -> u32 {
        self.budget - self.depth
    }

    /// Slot values as the simulation tracks them. Only tests and auditors
    /// should look at these; protocol code must go through `decrypt`.
    pub fn tracked_payload(&self) -> &[f64] {
        &self.payload
    }
}

/// Leveled homomorphic operations over some ciphertext type.
pub trait LeveledHe {
    type Ciphertext: Clone;

    fn keygen(&self, depth_budget: u32) -> KeyPair;
    fn encrypt(&self, key: &PublicKey, m: &PlainVector) -> Result<Self::Ciphertext>;
    fn decrypt(&self, key: &KeyPair, ct: &Self::Ciphertext) -> Result<PlainVector>;
    fn add(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext>;
    fn add_plain(&self, a: &Self::Ciphertext, p: &PlainVector) -> Result<Self::Ciphertext>;
    fn mul(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext>;
    fn mul_plain(&self, a: &Self::Ciphertext, p: &PlainVector) -> Result<Self::Ciphertext>;
    /// Cyclic left rotation of the slots by `steps`.
    fn rotate(&self, a: &Self::Ciphertext, steps: usize) -> Result<Self::Ciphertext>;
    /// Slots of `a` followed by slots of `b`.
    fn rotate_concat(&self, a: &Self::Ciphertext, b: &Self::Ciphertext)
        -> Result<Self::Ciphertext>;
    fn depth(&self, ct: &Self::Ciphertext) -> u32;
    fn ledger(&self) -> &Ledger;
}

/// Exact-arithmetic backend with depth tracking.
#[derive(Debug, Default)]
pub struct TrackedBackend {
    next_key: AtomicU64,
    ledger: Ledger,
}

impl TrackedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_key(op: &'static str, a: &TrackedCiphertext, b: &TrackedCiphertext) -> Result<()> {
        if a.key_id != b.key_id {
            return Err(Error::operand(
                op,
                format!("operands bound to different keys ({} and {})", a.key_id, b.key_id),
            ));
        }
        Ok(())
    }

    fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
        if a != b {
            return Err(Error::operand(op, format!("length {a} vs {b}")));
        }
        Ok(())
    }

    fn check_budget(op: &'static str, depth: u32, budget: u32) -> Result<()> {
        if depth > budget {
            return Err(Error::BudgetExhausted {
                op,
                required: depth,
                budget,
            });
        }
        Ok(())
    }

    /// Plain operand for element-wise ops; a length-1 vector broadcasts.
    fn plain_slots(op: &'static str, len: usize, p: &PlainVector) -> Result<Vec<f64>> {
        if p.dim() == 1 {
            return Ok(vec![p.values[0]; len]);
        }
        Self::check_len(op, len, p.dim())?;
        Ok(p.values.clone())
    }

    fn derive(&self, src: &TrackedCiphertext, payload: Vec<f64>, depth: u32) -> TrackedCiphertext {
        TrackedCiphertext {
            payload,
            depth,
            key_id: src.key_id,
            budget: src.budget,
        }
    }

    /// Replicated slot sum: every slot of the result holds the sum of all
    /// slots of `a`. Built from rotations and additions by binary expansion
    /// of the slot count (S_2m = S_m + rot(S_m, m), S_m+1 = a + rot(S_m, 1)).
    pub fn sum_slots(&self, a: &TrackedCiphertext) -> Result<TrackedCiphertext> {
        let n = a.len();
        let mut acc = a.clone();
        let mut m = 1usize;
        let top = usize::BITS - n.leading_zeros();
        for bit in (0..top - 1).rev() {
            let rotated = self.rotate(&acc, m)?;
            acc = self.add(&acc, &rotated)?;
            m *= 2;
            if (n >> bit) & 1 == 1 {
                let rotated = self.rotate(&acc, 1)?;
                acc = self.add(a, &rotated)?;
                m += 1;
            }
        }
        debug_assert_eq!(m, n);
        Ok(acc)
    }

    /// Encrypted inner product, replicated across all slots.
    pub fn dot(&self, a: &TrackedCiphertext, b: &TrackedCiphertext) -> Result<TrackedCiphertext> {
        let prod = self.mul(a, b)?;
        self.sum_slots(&prod)
    }

    /// Powers `t^1 ..= t^k_max` by binary decomposition:
    /// `t^i = t^(2^a) * t^(i - 2^a)` with `2^a` the largest power of two
    /// not exceeding `i`. `t^i` ends up at depth `t.depth + ceil(log2 i)`.
    pub fn power_tree(&self, t: &TrackedCiphertext, k_max: u32) -> Result<Vec<TrackedCiphertext>> {
        if k_max == 0 {
            return Err(Error::InvalidInput("power_tree needs k_max >= 1".into()));
        }
        Self::check_budget("power_tree", t.depth + ceil_log2(k_max), t.budget)?;

        let mut powers: Vec<TrackedCiphertext> = Vec::with_capacity(k_max as usize);
        powers.push(t.clone());
        for i in 2..=k_max as usize {
            let high = 1usize << (usize::BITS - 1 - i.leading_zeros());
            let next = if high == i {
                let half = &powers[i / 2 - 1];
                self.mul(half, half)?
            } else {
                self.mul(&powers[high - 1], &powers[i - high - 1])?
            };
            powers.push(next);
        }
        Ok(powers)
    }

    /// Packs single-slot or multi-slot ciphertexts into one by repeated
    /// `rotate_concat`.
    pub fn pack(&self, cts: &[TrackedCiphertext]) -> Result<TrackedCiphertext> {
        let (first, rest) = cts
            .split_first()
            .ok_or_else(|| Error::InvalidInput("nothing to pack".into()))?;
        let mut acc = first.clone();
        for ct in rest {
            acc = self.rotate_concat(&acc, ct)?;
        }
        Ok(acc)
    }
}

impl LeveledHe for TrackedBackend {
    type Ciphertext = TrackedCiphertext;

    fn keygen(&self, depth_budget: u32) -> KeyPair {
        let id = self.next_key.fetch_add(1, Ordering::Relaxed);
        KeyPair {
            public: PublicKey {
                key_id: KeyId(id),
                depth_budget,
            },
        }
    }

    fn encrypt(&self, key: &PublicKey, m: &PlainVector) -> Result<TrackedCiphertext> {
        if m.values.is_empty() {
            return Err(Error::InvalidInput("cannot encrypt an empty vector".into()));
        }
        Ok(TrackedCiphertext {
            payload: m.values.clone(),
            depth: 0,
            key_id: key.key_id,
            budget: key.depth_budget,
        })
    }

    fn decrypt(&self, key: &KeyPair, ct: &TrackedCiphertext) -> Result<PlainVector> {
        if ct.key_id != key.key_id() {
            return Err(Error::WrongKey {
                expected: key.key_id(),
                found: ct.key_id,
            });
        }
        PlainVector::new(ct.payload.clone())
    }

    fn add(&self, a: &TrackedCiphertext, b: &TrackedCiphertext) -> Result<TrackedCiphertext> {
        Self::check_key("add", a, b)?;
        Self::check_len("add", a.len(), b.len())?;
        let payload = a.payload.iter().zip(&b.payload).map(|(x, y)| x + y).collect();
        let out = self.derive(a, payload, a.depth.max(b.depth));
        self.ledger.record(OpKind::Add, out.depth);
        Ok(out)
    }

    fn add_plain(&self, a: &TrackedCiphertext, p: &PlainVector) -> Result<TrackedCiphertext> {
        Self::check_len("add_plain", a.len(), p.dim())?;
        let payload = a.payload.iter().zip(&p.values).map(|(x, y)| x + y).collect();
        let out = self.derive(a, payload, a.depth);
        self.ledger.record(OpKind::Add, out.depth);
        Ok(out)
    }

    fn mul(&self, a: &TrackedCiphertext, b: &TrackedCiphertext) -> Result<TrackedCiphertext> {
        Self::check_key("mul", a, b)?;
        Self::check_len("mul", a.len(), b.len())?;
        let depth = a.depth.max(b.depth) + 1;
        Self::check_budget("mul", depth, a.budget)?;
        let payload = a.payload.iter().zip(&b.payload).map(|(x, y)| x * y).collect();
        let out = self.derive(a, payload, depth);
        self.ledger.record(OpKind::CtCtMul, depth);
        Ok(out)
    }

    fn mul_plain(&self, a: &TrackedCiphertext, p: &PlainVector) -> Result<TrackedCiphertext> {
        let slots = Self::plain_slots("mul_plain", a.len(), p)?;
        let depth = a.depth + 1;
        Self::check_budget("mul_plain", depth, a.budget)?;
        let payload = a.payload.iter().zip(&slots).map(|(x, y)| x * y).collect();
        let out = self.derive(a, payload, depth);
        self.ledger.record(OpKind::CtPtMul, depth);
        Ok(out)
    }

    fn rotate(&self, a: &TrackedCiphertext, steps: usize) -> Result<TrackedCiphertext> {
        let mut payload = a.payload.clone();
        payload.rotate_left(steps % a.len());
        let out = self.derive(a, payload, a.depth);
        self.ledger.record(OpKind::Rotation, out.depth);
        Ok(out)
    }

    fn rotate_concat(
        &self,
        a: &TrackedCiphertext,
        b: &TrackedCiphertext,
    ) -> Result<TrackedCiphertext> {
        Self::check_key("rotate_concat", a, b)?;
        let mut payload = Vec::with_capacity(a.len() + b.len());
        payload.extend_from_slice(&a.payload);
        payload.extend_from_slice(&b.payload);
        let out = self.derive(a, payload, a.depth.max(b.depth));
        self.ledger.record(OpKind::Rotation, out.depth);
        Ok(out)
    }

    fn depth(&self, ct: &TrackedCiphertext) -> u32 {
        ct.depth
    }

    fn ledger(&self) -> &Ledger {
        &self.ledger
    }
}
