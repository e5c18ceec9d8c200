//! Replicated chain copies, quorum commit and canonical-chain selection.
//!
//! Rounds are driven synchronously by the caller. A block is committed when
//! at least [`QuorumConfig::quorum_size`] replicas acknowledge it, and the
//! canonical chain is the one whose head hash that many intact replicas
//! report. Replicas hold their chain as raw `PCH1` file bytes so that
//! byte-level damage is represented faithfully.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{put_u32, Encode};
use crate::hash::Hash256;
use crate::identity::{Directory, NodeIdentity, Signature};
use crate::ledger::{
    chain_file_block_spans, check_block, verify_chain, verify_chain_bytes, Block, Chain,
    ChainFileError, FailedCheck, VerificationReport,
};
use crate::provenance::{apply_transaction, validate_transaction, RejectReason, UnspentUnitSet};

pub type ReplicaId = u32;

/// A rational consent threshold `num/den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u32,
    pub den: u32,
}

impl Fraction {
    pub const TWO_THIRDS: Fraction = Fraction { num: 2, den: 3 };

    pub fn new(num: u32, den: u32) -> Self {
        Fraction { num, den }
    }

    /// `ceil(n * num / den)`
    pub fn ceil_of(&self, n: usize) -> usize {
        let n = n as u64;
        let (num, den) = (self.num as u64, self.den as u64);
        ((n * num).div_ceil(den)) as usize
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("consent fraction must be written as p/q or a decimal, got {0:?}")]
pub struct ParseFractionError(String);

impl FromStr for Fraction {
    type Err = ParseFractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFractionError(s.to_owned());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            return Ok(Fraction::new(
                n.trim().parse().map_err(|_| err())?,
                d.trim().parse().map_err(|_| err())?,
            ));
        }
        // decimal: "0.75" -> 75/100
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if frac.len() > 6 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let den = 10u32.pow(frac.len() as u32);
        let int: u32 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
        let frac: u32 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        Ok(Fraction::new(int * den + frac, den))
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Number(x) => format!("{x}").parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuorumMode {
    /// Quorum is `ceil(consent_fraction * n)`.
    Fraction,
    /// Quorum is `n - f`, with `n >= 3f + 1` enforced.
    Bft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumConfig {
    pub replica_count: usize,
    pub fault_bound: usize,
    #[serde(default = "default_fraction")]
    pub consent_fraction: Fraction,
    #[serde(default = "default_mode")]
    pub mode: QuorumMode,
}

fn default_fraction() -> Fraction {
    Fraction::TWO_THIRDS
}

fn default_mode() -> QuorumMode {
    QuorumMode::Fraction
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("replica_count must be positive")]
    NoReplicas,
    #[error("bft mode needs replica_count >= 3 * fault_bound + 1 ({needed}), got {got}")]
    TooFewReplicas { needed: usize, got: usize },
    #[error("consent_fraction must lie in (1/2, 1], got {0}")]
    FractionOutOfRange(Fraction),
}

impl QuorumConfig {
    /// `n = 3f + 1` replicas in BFT mode.
    pub fn bft(fault_bound: usize) -> Self {
        QuorumConfig {
            replica_count: 3 * fault_bound + 1,
            fault_bound,
            consent_fraction: Fraction::TWO_THIRDS,
            mode: QuorumMode::Bft,
        }
    }

    pub fn fraction(replica_count: usize, consent_fraction: Fraction, fault_bound: usize) -> Self {
        QuorumConfig {
            replica_count,
            fault_bound,
            consent_fraction,
            mode: QuorumMode::Fraction,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replica_count == 0 {
            return Err(ConfigError::NoReplicas);
        }
        match self.mode {
            QuorumMode::Bft => {
                let needed = 3 * self.fault_bound + 1;
                if self.replica_count < needed {
                    return Err(ConfigError::TooFewReplicas {
                        needed,
                        got: self.replica_count,
                    });
                }
            }
            QuorumMode::Fraction => {
                let Fraction { num, den } = self.consent_fraction;
                if den == 0 || 2 * num as u64 <= den as u64 || num > den {
                    return Err(ConfigError::FractionOutOfRange(self.consent_fraction));
                }
            }
        }
        Ok(())
    }

    pub fn quorum_size(&self) -> usize {
        match self.mode {
            QuorumMode::Bft => self.replica_count - self.fault_bound,
            QuorumMode::Fraction => self.consent_fraction.ceil_of(self.replica_count).max(1),
        }
    }
}

impl Default for QuorumConfig {
    fn default() -> Self {
        QuorumConfig::bft(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaStatus {
    Honest,
    /// The replica found its own copy damaged and awaits repair.
    Corrupted,
    Offline,
}

/// One copy of the shared chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replica {
    id: ReplicaId,
    identity: NodeIdentity,
    storage: Vec<u8>,
    head: Hash256,
    status: ReplicaStatus,
    /// Digest of `storage` as of the last write this replica made itself.
    sealed: Hash256,
    height: u64,
    state: UnspentUnitSet,
}

impl Replica {
    pub fn new(id: ReplicaId, identity: NodeIdentity, chain: &Chain) -> Self {
        let storage = chain.to_file_bytes();
        Replica {
            id,
            identity,
            sealed: Hash256::digest(&storage),
            storage,
            head: chain.head_hash(),
            status: ReplicaStatus::Honest,
            height: chain.height(),
            state: UnspentUnitSet::from_chain(chain),
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn identity(&self) -> &NodeIdentity {
        &self.identity
    }

    /// The head hash this replica trusts.
    pub fn head(&self) -> Hash256 {
        self.head
    }

    pub fn status(&self) -> ReplicaStatus {
        self.status
    }

    pub fn storage(&self) -> &[u8] {
        &self.storage
    }

    pub fn chain(&self) -> Result<Chain, ChainFileError> {
        Chain::from_file_bytes(&self.storage)
    }

    pub fn go_offline(&mut self) {
        self.status = ReplicaStatus::Offline;
    }

    pub fn is_reachable(&self) -> bool {
        self.status != ReplicaStatus::Offline
    }

    /// Verifies the stored chain against the stored head. Storage that is
    /// byte-identical to the replica's own last write skips re-verification.
    pub fn self_check(&self) -> VerificationReport {
        if Hash256::digest(&self.storage) == self.sealed {
            return VerificationReport::Valid;
        }
        verify_chain_bytes(&self.storage, &self.head)
    }

    /// Flips every bit of one stored byte of block `block_index`, both taken
    /// modulo the available range. Returns the absolute storage offset.
    pub fn corrupt(&mut self, block_index: usize, byte_offset: usize) -> usize {
        let span = match chain_file_block_spans(&self.storage) {
            Ok(spans) => spans[block_index % spans.len()].clone(),
            Err(_) => 0..self.storage.len(),
        };
        let at = span.start + byte_offset % span.len();
        self.storage[at] ^= 0xff;
        at
    }

    fn accept(&mut self, block: &Block, state: UnspentUnitSet) {
        let mut bytes = std::mem::take(&mut self.storage);
        let count = u32::from_be_bytes(bytes[4..8].try_into().expect("header present")) + 1;
        let mut prefix = Vec::with_capacity(4);
        put_u32(&mut prefix, count);
        bytes[4..8].copy_from_slice(&prefix);
        block.encode_to(&mut bytes);
        self.sealed = Hash256::digest(&bytes);
        self.storage = bytes;
        self.head = block.hash();
        self.height = block.header.height;
        self.state = state;
    }

    /// Checks a proposed successor block against this replica's copy.
    fn evaluate(&self, block: &Block, directory: &Directory) -> Result<UnspentUnitSet, Refusal> {
        if !self.is_reachable() {
            return Err(Refusal::Offline);
        }
        let check = self.self_check();
        if !check.is_valid() {
            return Err(Refusal::Damaged(check));
        }
        if block.header.prev_hash != self.head {
            return Err(Refusal::Stale { head: self.head });
        }
        check_block(block, self.height + 1, Some(self.head)).map_err(Refusal::InvalidBlock)?;
        let mut state = self.state.clone();
        for (index, tx) in block.transactions.iter().enumerate() {
            validate_transaction(&state, tx, directory)
                .map_err(|reason| Refusal::InvalidTransaction { index, reason })?;
            state = apply_transaction(&state, tx);
        }
        Ok(state)
    }

    pub fn status_record(&self) -> ReplicaRecord {
        ReplicaRecord {
            id: self.id,
            pseudonym: self.identity.pseudonym().to_hex(),
            status: self.status,
            head: self.head,
            storage_bytes: self.storage.len(),
            verification: verify_chain_bytes(&self.storage, &self.head),
        }
    }
}

/// JSON status record written next to a replica's chain file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub id: ReplicaId,
    pub pseudonym: String,
    pub status: ReplicaStatus,
    pub head: Hash256,
    pub storage_bytes: usize,
    pub verification: VerificationReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "refusal", rename_all = "snake_case")]
pub enum Refusal {
    Offline,
    /// The replica's own copy failed verification.
    Damaged(VerificationReport),
    /// The block does not extend this replica's head.
    Stale { head: Hash256 },
    InvalidBlock(FailedCheck),
    InvalidTransaction { index: usize, reason: RejectReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub replica: ReplicaId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCertificate {
    pub block_hash: Hash256,
    pub acks: Vec<Ack>,
}

impl CommitCertificate {
    /// At least `quorum` distinct replicas, each with a valid signature.
    pub fn is_valid(&self, quorum: usize) -> bool {
        let mut ids: Vec<ReplicaId> = self.acks.iter().map(|a| a.replica).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len() == self.acks.len()
            && ids.len() >= quorum
            && self
                .acks
                .iter()
                .all(|a| a.signature.verify_self_certified(&self.block_hash.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ProposeError {
    #[error("InsufficientQuorum: {acks} acks, {needed} needed")]
    InsufficientQuorum { acks: usize, needed: usize },
    #[error("ValidationDivergence: intact replicas disagree on block validity")]
    ValidationDivergence,
}

/// Outcome of one proposal round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReport {
    pub block_hash: Hash256,
    pub result: Result<CommitCertificate, ProposeError>,
    pub refusals: Vec<(ReplicaId, Refusal)>,
}

/// Offers `block` to every replica; it is appended by the acknowledging
/// replicas only once a quorum of them has acknowledged.
///
/// A replica that finds its own copy damaged marks itself
/// [`ReplicaStatus::Corrupted`] and does not vote.
pub fn propose_block(
    replicas: &mut [Replica],
    block: &Block,
    directory: &Directory,
    config: &QuorumConfig,
) -> RoundReport {
    let block_hash = block.hash();
    let needed = config.quorum_size();
    let mut accepted: Vec<(usize, UnspentUnitSet)> = Vec::new();
    let mut refusals = Vec::new();
    for (slot, r) in replicas.iter_mut().enumerate() {
        match r.evaluate(block, directory) {
            Ok(state) => accepted.push((slot, state)),
            Err(refusal) => {
                if matches!(refusal, Refusal::Damaged(_)) {
                    r.status = ReplicaStatus::Corrupted;
                }
                refusals.push((r.id, refusal));
            }
        }
    }

    let rejected_on_merit = refusals.iter().any(|(_, f)| {
        matches!(f, Refusal::InvalidBlock(_) | Refusal::InvalidTransaction { .. })
    });
    let result = if rejected_on_merit && !accepted.is_empty() {
        Err(ProposeError::ValidationDivergence)
    } else if accepted.len() < needed {
        Err(ProposeError::InsufficientQuorum {
            acks: accepted.len(),
            needed,
        })
    } else {
        let mut acks = Vec::with_capacity(accepted.len());
        for (slot, state) in accepted {
            let r = &mut replicas[slot];
            r.accept(block, state);
            acks.push(Ack {
                replica: r.id,
                signature: r.identity.sign(&block_hash.0).expect("non-empty"),
            });
        }
        Ok(CommitCertificate { block_hash, acks })
    };
    RoundReport {
        block_hash,
        result,
        refusals,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum FlagKind {
    /// Own copy fails verification against its own head.
    Damaged { report: VerificationReport },
    /// Intact copy, but its head is outside the quorum.
    Minority { head: Hash256 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub replica: ReplicaId,
    pub kind: FlagKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalSelection {
    pub chain: Chain,
    pub supporters: Vec<ReplicaId>,
    pub flagged: Vec<Flag>,
}

impl CanonicalSelection {
    pub fn head(&self) -> Hash256 {
        self.chain.head_hash()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ConsensusError {
    #[error("NoQuorum: no head reached {needed} intact replicas")]
    NoQuorum {
        needed: usize,
        tally: Vec<(Hash256, usize)>,
        flagged: Vec<Flag>,
    },
    /// Two heads both reached quorum. Only possible under a misconfigured
    /// threshold at or below one half.
    #[error("two distinct heads reached quorum")]
    Contradiction { heads: Vec<Hash256> },
}

/// Selects the chain reported by a quorum of intact, reachable replicas.
pub fn canonical_chain(
    replicas: &[Replica],
    config: &QuorumConfig,
) -> Result<CanonicalSelection, ConsensusError> {
    let needed = config.quorum_size();
    let mut flagged = Vec::new();
    let mut votes: BTreeMap<Hash256, Vec<usize>> = BTreeMap::new();
    for (slot, r) in replicas.iter().enumerate() {
        if !r.is_reachable() {
            continue;
        }
        let report = r.self_check();
        if report.is_valid() {
            votes.entry(r.head).or_default().push(slot);
        } else {
            flagged.push(Flag {
                replica: r.id,
                kind: FlagKind::Damaged { report },
            });
        }
    }
    let winners: Vec<Hash256> = votes
        .iter()
        .filter(|(_, v)| v.len() >= needed)
        .map(|(h, _)| *h)
        .collect();
    let head = match winners.as_slice() {
        [] => {
            return Err(ConsensusError::NoQuorum {
                needed,
                tally: votes.iter().map(|(h, v)| (*h, v.len())).collect(),
                flagged,
            })
        }
        [one] => *one,
        _ => return Err(ConsensusError::Contradiction { heads: winners }),
    };
    for (h, slots) in &votes {
        if *h != head {
            flagged.extend(slots.iter().map(|s| Flag {
                replica: replicas[*s].id,
                kind: FlagKind::Minority { head: *h },
            }));
        }
    }
    flagged.sort_by_key(|f| f.replica);
    let slots = &votes[&head];
    let chain = replicas[slots[0]]
        .chain()
        .expect("a self-checked replica decodes");
    Ok(CanonicalSelection {
        chain,
        supporters: slots.iter().map(|s| replicas[*s].id).collect(),
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("InvalidCanonical: {0}")]
    InvalidCanonical(VerificationReport),
}

/// Replaces a replica's copy with `canonical` and marks it honest again.
pub fn repair_replica(faulty: &Replica, canonical: &Chain) -> Result<Replica, RepairError> {
    let report = verify_chain(canonical, &canonical.head_hash());
    if !report.is_valid() {
        return Err(RepairError::InvalidCanonical(report));
    }
    let mut repaired = Replica::new(faulty.id, faulty.identity.clone(), canonical);
    repaired.status = ReplicaStatus::Honest;
    Ok(repaired)
}
