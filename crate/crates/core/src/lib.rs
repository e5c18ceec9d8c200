//! Tamper-evident supply-chain ledger.
//!
//! The crate is organised around five pieces:
//!
//! * [`ledger`]: canonical encoding, blocks, hash-linked chains and head-hash verification.
//! * [`identity`]: Ed25519 keys, pseudonyms derived from public keys, and the off-ledger directory.
//! * [`provenance`]: unique units, the unspent-unit set, dual-signature transactions and recall tracing.
//! * [`consensus`]: replicated chain copies, quorum commit and canonical-chain selection.
//! * [`simnet`]: deterministic scenarios with fault injection.

pub mod codec;
pub mod consensus;
pub mod hash;
pub mod identity;
pub mod ledger;
pub mod provenance;
pub mod simnet;

pub use hash::Hash256;
pub use identity::{keygen, Directory, NodeIdentity, Pseudonym, PublicKey, Signature};
pub use ledger::{append_block, verify_chain, Block, BlockHeader, Chain, Ledger, VerificationReport};
pub use provenance::{
    apply_transaction, build_provenance_graph, recall_set, trace_back, validate_transaction,
    ProvenanceGraph, RejectReason, Transaction, UnitId, UnspentUnitSet,
};
