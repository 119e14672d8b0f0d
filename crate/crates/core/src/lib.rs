//! Three-party vertical federated learning over a simulated leveled
//! homomorphic encryption backend.
//!
//! Alice and Bob hold disjoint feature columns of the same samples, Bob also
//! holds the labels, and Eve owns the decryption key. The crate provides the
//! tracked ciphertext backend, the data and kernel exchange protocols, secure
//! LR/KLR training, and operation/depth accounting.

pub mod approx;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod he;
pub mod ledger;
pub mod protocol;
pub mod training;

pub use approx::{KernelMatrix, KernelSpec, Provenance, Sigmoid, SigmoidPoly};
pub use dataset::{Dataset, VerticalSplit};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentResult, ResultsTable};
pub use he::{KeyId, KeyPair, LeveledHe, PlainVector, PublicKey, TrackedBackend, TrackedCiphertext};
pub use ledger::{CostLedger, DepthReport, Ledger, ModelKind, ProtocolKind};
pub use protocol::{Federation, PartyId, ProtocolTranscript};
pub use training::{Model, TrainConfig, TrainReport};
