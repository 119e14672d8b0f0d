use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;

use super::message::{Channel, MessageKind, Payload, PartyId};
use super::transcript::ProtocolTranscript;
use crate::approx::{KernelMatrix, KernelSpec, Provenance};
use crate::dataset::VerticalSplit;
use crate::error::{Error, Result};
use crate::he::{KeyPair, LeveledHe, PlainVector, PublicKey, TrackedBackend, TrackedCiphertext};
use crate::ledger::{CostLedger, ProtocolKind};

/// Feature owner without labels.
#[derive(Debug)]
pub struct Alice {
    x: DMatrix<f64>,
    pk: Option<PublicKey>,
}

/// Feature owner holding the labels; performs all encrypted computation.
#[derive(Debug)]
pub struct Bob {
    x: DMatrix<f64>,
    y: Vec<f64>,
    pk: Option<PublicKey>,
}

/// Key owner. Sees only what it can decrypt.
#[derive(Debug)]
pub struct Eve {
    keys: KeyPair,
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

fn inner(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    x.row(i).dot(&x.row(j))
}

fn sq_dist(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (x.row(i) - x.row(j)).norm_squared()
}

fn key(pk: Option<PublicKey>, who: PartyId) -> Result<PublicKey> {
    pk.ok_or_else(|| Error::Protocol(format!("{who} has not received the public key")))
}

/// Bob-held encrypted aggregated rows `[x_i^A | x_i^B]`.
#[derive(Debug, Clone)]
pub struct EncryptedFeatures {
    pub rows: Vec<TrackedCiphertext>,
    /// Cost of the exchange.
    pub ledger: CostLedger,
}

/// Bob-held kernel matrix, one single-slot ciphertext per entry (row-major).
#[derive(Debug, Clone)]
pub struct EncryptedKernel {
    pub n: usize,
    pub entries: Vec<TrackedCiphertext>,
    pub spec: KernelSpec,
    pub protocol: ProtocolKind,
    /// Cost of computing entry (0, 0).
    pub entry_cost: CostLedger,
    /// Whether every entry had exactly the cost of entry (0, 0).
    pub uniform_costs: bool,
    /// Depth of every entry.
    pub entry_depth: u32,
    /// Cost of the whole exchange.
    pub ledger: CostLedger,
}

impl EncryptedKernel {
    pub fn entry(&self, i: usize, j: usize) -> &TrackedCiphertext {
        &self.entries[i * self.n + j]
    }
}

/// One run of the three-party scheme: shared backend, channel and parties.
#[derive(Debug)]
pub struct Federation {
    pub(crate) backend: TrackedBackend,
    pub(crate) channel: Channel,
    pub(crate) alice: Alice,
    pub(crate) bob: Bob,
    pub(crate) eve: Eve,
}

impl Federation {
    /// Eve generates a key with `depth_budget` and sends the public half to
    /// Alice and Bob.
    pub fn setup(split: &VerticalSplit, depth_budget: u32) -> Result<Self> {
        let (na, nb) = (split.alice_x.nrows(), split.bob_x.nrows());
        if na != nb || nb != split.bob_y.len() {
            return Err(Error::Alignment { alice: na, bob: nb });
        }
        let backend = TrackedBackend::new();
        let eve = Eve {
            keys: backend.keygen(depth_budget),
        };
        let mut fed = Federation {
            backend,
            channel: Channel::new(),
            alice: Alice {
                x: split.alice_x.clone(),
                pk: None,
            },
            bob: Bob {
                x: split.bob_x.clone(),
                y: split.bob_y.clone(),
                pk: None,
            },
            eve,
        };
        let pk = fed.eve.keys.public();
        for to in [PartyId::Alice, PartyId::Bob] {
            fed.channel.send(PartyId::Eve, to, MessageKind::PublicKey, Payload::PublicKey(pk));
        }
        fed.alice.pk = Some(fed.channel.recv(PartyId::Alice, MessageKind::PublicKey)?.public_key()?);
        fed.bob.pk = Some(fed.channel.recv(PartyId::Bob, MessageKind::PublicKey)?.public_key()?);
        Ok(fed)
    }

    pub fn n(&self) -> usize {
        self.bob.y.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.bob.y
    }

    pub fn backend(&self) -> &TrackedBackend {
        &self.backend
    }

    pub fn depth_budget(&self) -> u32 {
        self.eve.keys.depth_budget()
    }

    pub fn eve_public_key(&self) -> PublicKey {
        self.eve.keys.public()
    }

    /// Decryption with Eve's key, for checking results against plaintext
    /// oracles. Not part of any protocol; sends no message.
    pub fn eve_decrypt(&self, ct: &TrackedCiphertext) -> Result<PlainVector> {
        self.backend.decrypt(&self.eve.keys, ct)
    }

    pub fn transcript(&self, protocol_name: impl Into<String>) -> ProtocolTranscript {
        ProtocolTranscript {
            protocol_name: protocol_name.into(),
            messages: self.channel.log(),
            ledger: self.backend.ledger().total(),
        }
    }

    /// Secure data exchange: Bob ends up with `[x_i^A | x_i^B]` encrypted
    /// under Eve's key for every row.
    pub fn exchange_features(&self) -> Result<EncryptedFeatures> {
        let (rows, ledger) = self
            .backend
            .ledger()
            .scoped(ProtocolKind::DataExchange.name(), || self.run_feature_exchange());
        Ok(EncryptedFeatures { rows: rows?, ledger })
    }

    fn run_feature_exchange(&self) -> Result<Vec<TrackedCiphertext>> {
        let be = &self.backend;
        let n = self.n();

        let pk_a = key(self.alice.pk, PartyId::Alice)?;
        let enc_a = (0..n)
            .map(|i| be.encrypt(&pk_a, &PlainVector::new(row(&self.alice.x, i))?))
            .collect::<Result<Vec<_>>>()?;
        self.channel
            .send(PartyId::Alice, PartyId::Bob, MessageKind::EncryptedRows, Payload::Ciphertexts(enc_a));

        let msg = self.channel.recv(PartyId::Bob, MessageKind::EncryptedRows)?;
        let from_alice = msg.ciphertexts()?;
        if from_alice.len() != n {
            return Err(Error::Alignment {
                alice: from_alice.len(),
                bob: n,
            });
        }
        let pk_b = key(self.bob.pk, PartyId::Bob)?;
        from_alice
            .iter()
            .enumerate()
            .map(|(i, ca)| {
                let cb = be.encrypt(&pk_b, &PlainVector::new(row(&self.bob.x, i))?)?;
                be.rotate_concat(ca, &cb)
            })
            .collect()
    }

    pub fn exchange_kernel(&self, spec: &KernelSpec) -> Result<EncryptedKernel> {
        spec.validate()?;
        match *spec {
            KernelSpec::Linear => self.exchange_linear_kernel(),
            KernelSpec::Polynomial { c, degree } => self.exchange_poly_kernel(c, degree),
            KernelSpec::RbfTaylor2 { gamma } => self.exchange_rbf_kernel(gamma),
            KernelSpec::RbfExact { .. } => Err(Error::UnknownCombination(
                "the exact RBF kernel cannot be computed homomorphically".into(),
            )),
        }
    }

    /// Alice encrypts one or more per-pair values for every (i, j) and
    /// sends them to Bob in one batch.
    fn alice_send_shares(&self, per_pair: impl Fn(usize, usize) -> Vec<f64>) -> Result<()> {
        let pk = key(self.alice.pk, PartyId::Alice)?;
        let n = self.n();
        let mut cts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for v in per_pair(i, j) {
                    cts.push(self.backend.encrypt(&pk, &PlainVector::scalar(v))?);
                }
            }
        }
        self.channel
            .send(PartyId::Alice, PartyId::Bob, MessageKind::KernelShares, Payload::Ciphertexts(cts));
        Ok(())
    }

    /// Bob combines Alice's shares with his own, each entry in its own
    /// ledger scope. `per_pair` gives Bob's plaintext values for (i, j);
    /// `combine` gets Alice's and Bob's ciphertexts for that entry.
    fn bob_combine(
        &self,
        protocol: ProtocolKind,
        spec: KernelSpec,
        shares_per_pair: usize,
        per_pair: impl Fn(usize, usize) -> Vec<f64>,
        combine: impl Fn(&[TrackedCiphertext], &[TrackedCiphertext]) -> Result<TrackedCiphertext>,
    ) -> Result<EncryptedKernel> {
        let be = &self.backend;
        let n = self.n();
        let msg = self.channel.recv(PartyId::Bob, MessageKind::KernelShares)?;
        let shares = msg.ciphertexts()?;
        if shares.len() != n * n * shares_per_pair {
            return Err(Error::Protocol(format!(
                "expected {} kernel shares, got {}",
                n * n * shares_per_pair,
                shares.len()
            )));
        }
        let pk = key(self.bob.pk, PartyId::Bob)?;
        let mut entries = Vec::with_capacity(n * n);
        let mut entry_cost: Option<CostLedger> = None;
        let mut uniform = true;
        for i in 0..n {
            for j in 0..n {
                let own = per_pair(i, j)
                    .into_iter()
                    .map(|v| be.encrypt(&pk, &PlainVector::scalar(v)))
                    .collect::<Result<Vec<_>>>()?;
                let k = (i * n + j) * shares_per_pair;
                let alice = &shares[k..k + shares_per_pair];
                let (ct, cost) = be.ledger().scoped("entry", || combine(alice, &own));
                let ct = ct?;
                match &entry_cost {
                    None => entry_cost = Some(cost),
                    Some(first) => uniform &= first.same_counts(&cost),
                }
                entries.push(ct);
            }
        }
        let entry_depth = entries[0].depth();
        uniform &= entries.iter().all(|c| c.depth() == entry_depth);
        let mut entry_cost = entry_cost.expect("n >= 1");
        entry_cost.scope_tag = protocol.name().to_string();
        Ok(EncryptedKernel {
            n,
            entries,
            spec,
            protocol,
            entry_cost,
            uniform_costs: uniform,
            entry_depth,
            ledger: CostLedger::default(),
        })
    }

    fn with_protocol_scope(
        &self,
        protocol: ProtocolKind,
        f: impl FnOnce() -> Result<EncryptedKernel>,
    ) -> Result<EncryptedKernel> {
        let (out, ledger) = self.backend.ledger().scoped(protocol.name(), f);
        let mut out = out?;
        out.ledger = ledger;
        Ok(out)
    }

    /// `[K] = [K^A] + [K^B]` entrywise.
    pub fn exchange_linear_kernel(&self) -> Result<EncryptedKernel> {
        let protocol = ProtocolKind::LinearKernel;
        self.with_protocol_scope(protocol, || {
            self.alice_send_shares(|i, j| vec![inner(&self.alice.x, i, j)])?;
            self.bob_combine(
                protocol,
                KernelSpec::Linear,
                1,
                |i, j| vec![inner(&self.bob.x, i, j)],
                |a, b| self.backend.add(&a[0], &b[0]),
            )
        })
    }

    /// `[K] = ([K^A] + [K^B] + c)^d_poly` by `d_poly - 1` sequential products.
    pub fn exchange_poly_kernel(&self, c: f64, d_poly: u32) -> Result<EncryptedKernel> {
        let spec = KernelSpec::Polynomial { c, degree: d_poly };
        spec.validate()?;
        let protocol = ProtocolKind::PolynomialKernel;
        let be = &self.backend;
        self.with_protocol_scope(protocol, || {
            self.alice_send_shares(|i, j| vec![inner(&self.alice.x, i, j)])?;
            self.bob_combine(
                protocol,
                spec.clone(),
                1,
                |i, j| vec![inner(&self.bob.x, i, j)],
                |a, b| {
                    let k1 = be.add(&a[0], &b[0])?;
                    let k2 = be.add_plain(&k1, &PlainVector::scalar(c))?;
                    let mut acc = k2.clone();
                    for _ in 1..d_poly {
                        acc = be.mul(&acc, &k2)?;
                    }
                    Ok(acc)
                },
            )
        })
    }

    /// Taylor-2 RBF: each side sends `u = -gamma |x_i - x_j|^2` and
    /// `u / sqrt 2` for its own columns; Bob forms `1 + K1 + K2^2`.
    pub fn exchange_rbf_kernel(&self, gamma: f64) -> Result<EncryptedKernel> {
        let spec = KernelSpec::RbfTaylor2 { gamma };
        spec.validate()?;
        let protocol = ProtocolKind::RbfKernel;
        let be = &self.backend;
        self.with_protocol_scope(protocol, || {
            self.channel.send(
                PartyId::Bob,
                PartyId::Alice,
                MessageKind::Params,
                Payload::params([("gamma", gamma)]),
            );
            let gamma_a = self.channel.recv(PartyId::Alice, MessageKind::Params)?.param("gamma")?;
            self.alice_send_shares(|i, j| {
                let u = -gamma_a * sq_dist(&self.alice.x, i, j);
                vec![u, u / SQRT_2]
            })?;
            self.bob_combine(
                protocol,
                spec.clone(),
                2,
                |i, j| {
                    let u = -gamma * sq_dist(&self.bob.x, i, j);
                    vec![u, u / SQRT_2]
                },
                |a, b| {
                    let k1 = be.add(&a[0], &b[0])?;
                    let k2 = be.add(&a[1], &b[1])?;
                    let one_plus = be.add_plain(&k1, &PlainVector::scalar(1.0))?;
                    let sq = be.mul(&k2, &k2)?;
                    be.add(&one_plus, &sq)
                },
            )
        })
    }

    /// Packs kernel column `K(:, i)` into one ciphertext per `i` by folding
    /// `rotate_concat`. Counted under its own scope.
    pub fn pack_kernel_columns(&self, k: &EncryptedKernel) -> Result<Vec<TrackedCiphertext>> {
        let n = k.n;
        let (cols, _) = self.backend.ledger().scoped("kernel_packing", || {
            (0..n)
                .map(|i| {
                    let column: Vec<TrackedCiphertext> =
                        (0..n).map(|j| k.entry(j, i).clone()).collect();
                    self.backend.pack(&column)
                })
                .collect::<Result<Vec<_>>>()
        });
        cols
    }

    /// Eve-side decryption of a whole encrypted kernel (oracle helper).
    pub fn reveal_kernel(&self, k: &EncryptedKernel) -> Result<KernelMatrix> {
        let mut entries = DMatrix::zeros(k.n, k.n);
        for i in 0..k.n {
            for j in 0..k.n {
                entries[(i, j)] = self.eve_decrypt(k.entry(i, j))?.values()[0];
            }
        }
        Ok(KernelMatrix {
            n: k.n,
            entries,
            spec: k.spec.clone(),
            provenance: Provenance::SecureExchange,
        })
    }
}
