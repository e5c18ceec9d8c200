//! Unique units, the unspent-unit set and dual-signature transactions.
//!
//! Every unit is identified by the transaction that produced it and its
//! output position, the same outpoint scheme Bitcoin uses. A transaction
//! consumes whole units and declares, for each output, exactly which inputs
//! went into it; the union of those declarations must equal the inputs so
//! nothing is discarded silently. That explicit parentage is what makes the
//! provenance graph in [`graph`] exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{put_bytes, put_list, put_option, put_u64, Decode, DecodeError, Encode, Reader};
use crate::hash::Hash256;
use crate::identity::{verify_signature, Directory, NodeIdentity, Pseudonym, Signature};
use crate::ledger::Chain;

pub mod graph;

pub use graph::{
    build_provenance_graph, recall_set, trace_back, AncestryEntry, AncestrySubgraph, GraphError,
    ProvenanceGraph, RecallEntry, RecallReport, UnitStatus,
};

/// Outpoint of a unit: producing transaction plus output position.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitId {
    pub origin_tx: Hash256,
    pub output_index: u64,
}

impl UnitId {
    pub fn new(origin_tx: Hash256, output_index: u64) -> Self {
        UnitId {
            origin_tx,
            output_index,
        }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin_tx, self.output_index)
    }
}

impl fmt::Debug for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin_tx.short(), self.output_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unit ids are written as <tx-hash-hex>:<output-index>")]
pub struct ParseUnitIdError;

impl FromStr for UnitId {
    type Err = ParseUnitIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tx, idx) = s.trim().split_once(':').ok_or(ParseUnitIdError)?;
        Ok(UnitId {
            origin_tx: tx.parse().map_err(|_| ParseUnitIdError)?,
            output_index: idx.parse().map_err(|_| ParseUnitIdError)?,
        })
    }
}

impl Serialize for UnitId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Encode for UnitId {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.origin_tx.0);
        put_u64(out, self.output_index);
    }
}

impl Decode for UnitId {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(UnitId {
            origin_tx: Hash256(r.array()?),
            output_index: r.u64()?,
        })
    }
}

/// One output of a transaction: what it is and which inputs went into it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutputSpec {
    pub kind: String,
    #[serde(default)]
    pub parents: Vec<UnitId>,
}

impl OutputSpec {
    pub fn new(kind: impl Into<String>, parents: Vec<UnitId>) -> Self {
        OutputSpec {
            kind: kind.into(),
            parents,
        }
    }
}

impl Encode for OutputSpec {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_bytes(out, self.kind.as_bytes());
        put_list(out, &self.parents);
    }
}

impl Decode for OutputSpec {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(OutputSpec {
            kind: r.string()?,
            parents: r.list()?,
        })
    }
}

/// A signed exchange between two pseudonyms.
///
/// Both signatures cover [`Transaction::signing_payload`], the canonical
/// encoding with the two signature slots empty. A mint has no inputs and the
/// same pseudonym on both sides.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<UnitId>,
    pub outputs: Vec<OutputSpec>,
    pub sender: Pseudonym,
    pub receiver: Pseudonym,
    pub height_hint: u64,
    #[serde(default)]
    pub sender_sig: Option<Signature>,
    #[serde(default)]
    pub receiver_sig: Option<Signature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CosignError {
    #[error("not a counterparty")]
    NotCounterparty,
}

impl Transaction {
    pub fn new(
        sender: Pseudonym,
        receiver: Pseudonym,
        inputs: Vec<UnitId>,
        outputs: Vec<OutputSpec>,
        height_hint: u64,
    ) -> Self {
        Transaction {
            inputs,
            outputs,
            sender,
            receiver,
            height_hint,
            sender_sig: None,
            receiver_sig: None,
        }
    }

    /// Unsigned mint of one raw unit per kind.
    pub fn mint<'a>(owner: Pseudonym, kinds: impl IntoIterator<Item = &'a str>, height_hint: u64) -> Self {
        let outputs = kinds
            .into_iter()
            .map(|k| OutputSpec::new(k, Vec::new()))
            .collect();
        Transaction::new(owner, owner, Vec::new(), outputs, height_hint)
    }

    pub fn is_mint(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Hash of the full canonical encoding; the `origin_tx` of every output.
    pub fn id(&self) -> Hash256 {
        Hash256::digest(&self.canonical_bytes())
    }

    pub fn output_id(&self, index: u64) -> UnitId {
        UnitId::new(self.id(), index)
    }

    /// The bytes both counterparties sign.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_body(&mut out);
        put_option::<Signature>(&mut out, None);
        put_option::<Signature>(&mut out, None);
        out
    }

    /// Adds `identity`'s signature in whichever slot(s) it is a party to.
    pub fn cosign(&mut self, identity: &NodeIdentity) -> Result<(), CosignError> {
        let me = identity.pseudonym();
        if me != self.sender && me != self.receiver {
            return Err(CosignError::NotCounterparty);
        }
        let sig = identity
            .sign(&self.signing_payload())
            .expect("payload is non-empty");
        if me == self.sender {
            self.sender_sig = Some(sig.clone());
        }
        if me == self.receiver {
            self.receiver_sig = Some(sig);
        }
        Ok(())
    }

    pub fn is_fully_signed(&self) -> bool {
        self.sender_sig.is_some() && self.receiver_sig.is_some()
    }

    fn encode_body(&self, out: &mut Vec<u8>) {
        put_list(out, &self.inputs);
        put_list(out, &self.outputs);
        self.sender.encode_to(out);
        self.receiver.encode_to(out);
        put_u64(out, self.height_hint);
    }
}

impl Encode for Transaction {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.encode_body(out);
        put_option(out, self.sender_sig.as_ref());
        put_option(out, self.receiver_sig.as_ref());
    }
}

impl Decode for Transaction {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction {
            inputs: r.list()?,
            outputs: r.list()?,
            sender: Pseudonym::decode_from(r)?,
            receiver: Pseudonym::decode_from(r)?,
            height_hint: r.u64()?,
            sender_sig: r.option()?,
            receiver_sig: r.option()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Unit {
    pub id: UnitId,
    pub kind: String,
    pub owner: Pseudonym,
    pub parents: Vec<UnitId>,
}

/// Why a transaction was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail")]
pub enum RejectReason {
    #[error("UnknownInput: {0} is not an unspent unit")]
    UnknownInput(UnitId),
    #[error("NotOwner: {0} is not owned by the sender")]
    NotOwner(UnitId),
    #[error("BadSenderSig: sender signature missing or invalid")]
    BadSenderSig,
    #[error("BadReceiverSig: receiver signature missing or invalid")]
    BadReceiverSig,
    #[error("ParentNotInInputs: {0} is not an input of this transaction")]
    ParentNotInInputs(UnitId),
    #[error("UnconsumedInput: {0} is not a parent of any output")]
    UnconsumedInput(UnitId),
    #[error("BadMint: {0}")]
    BadMint(String),
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::UnknownInput(_) => "UnknownInput",
            RejectReason::NotOwner(_) => "NotOwner",
            RejectReason::BadSenderSig => "BadSenderSig",
            RejectReason::BadReceiverSig => "BadReceiverSig",
            RejectReason::ParentNotInInputs(_) => "ParentNotInInputs",
            RejectReason::UnconsumedInput(_) => "UnconsumedInput",
            RejectReason::BadMint(_) => "BadMint",
        }
    }
}

/// Live units, plus the ids of every transaction applied so far.
///
/// The applied-transaction set lets a byte-identical repeat of an earlier
/// mint be refused; without it the repeat would recreate outpoints that
/// already existed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnspentUnitSet {
    units: BTreeMap<UnitId, Unit>,
    applied: BTreeSet<Hash256>,
}

impl UnspentUnitSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds every transaction of `chain` without re-checking signatures.
    /// Use [`crate::ledger::Ledger::replay`] for untrusted chains.
    pub fn from_chain(chain: &Chain) -> Self {
        chain
            .transactions()
            .fold(UnspentUnitSet::new(), |s, (_, tx)| apply_transaction(&s, tx))
    }

    pub fn get(&self, id: &UnitId) -> Option<&Unit> {
        self.units.get(id)
    }

    pub fn contains(&self, id: &UnitId) -> bool {
        self.units.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> impl Iterator<Item = &Unit> {
        self.units.values()
    }

    pub fn owned_by(&self, owner: Pseudonym) -> impl Iterator<Item = &Unit> {
        self.units.values().filter(move |u| u.owner == owner)
    }

    pub fn has_applied(&self, tx: &Hash256) -> bool {
        self.applied.contains(tx)
    }
}

fn check_sig(
    directory: &Directory,
    sig: Option<&Signature>,
    expected: Pseudonym,
    payload: &[u8],
) -> bool {
    match sig {
        Some(sig) if sig.signer == expected => {
            verify_signature(directory, sig, payload).unwrap_or(false)
        }
        _ => false,
    }
}

/// Checks `tx` against the current unspent set.
///
/// Structural rules are checked before signatures, so a well-formed
/// transaction with a missing signature reports which party has not signed.
pub fn validate_transaction(
    state: &UnspentUnitSet,
    tx: &Transaction,
    directory: &Directory,
) -> Result<(), RejectReason> {
    if tx.is_mint() {
        if tx.sender != tx.receiver {
            return Err(RejectReason::BadMint("a mint must be self-originated".into()));
        }
        if tx.outputs.is_empty() {
            return Err(RejectReason::BadMint("a mint must produce at least one unit".into()));
        }
        if let Some(p) = tx.outputs.iter().flat_map(|o| &o.parents).next() {
            return Err(RejectReason::ParentNotInInputs(*p));
        }
        if state.has_applied(&tx.id()) {
            return Err(RejectReason::BadMint("identical mint already recorded".into()));
        }
    } else {
        let mut seen = BTreeSet::new();
        for input in &tx.inputs {
            let unit = state.get(input).ok_or(RejectReason::UnknownInput(*input))?;
            if !seen.insert(*input) {
                return Err(RejectReason::UnknownInput(*input));
            }
            if unit.owner != tx.sender {
                return Err(RejectReason::NotOwner(*input));
            }
        }
        let mut covered = BTreeSet::new();
        for output in &tx.outputs {
            if output.parents.is_empty() {
                return Err(RejectReason::BadMint(
                    "only a mint may produce a unit without parents".into(),
                ));
            }
            let mut local = BTreeSet::new();
            for p in &output.parents {
                if !seen.contains(p) || !local.insert(*p) {
                    return Err(RejectReason::ParentNotInInputs(*p));
                }
            }
            covered.extend(local);
        }
        if let Some(orphan) = seen.difference(&covered).next() {
            return Err(RejectReason::UnconsumedInput(*orphan));
        }
    }

    let payload = tx.signing_payload();
    if !check_sig(directory, tx.sender_sig.as_ref(), tx.sender, &payload) {
        return Err(RejectReason::BadSenderSig);
    }
    if !check_sig(directory, tx.receiver_sig.as_ref(), tx.receiver, &payload) {
        return Err(RejectReason::BadReceiverSig);
    }
    Ok(())
}

/// Consumes the inputs and inserts one unit per output, owned by the receiver.
///
/// Callers must have validated `tx` against `state` first.
pub fn apply_transaction(state: &UnspentUnitSet, tx: &Transaction) -> UnspentUnitSet {
    let mut next = state.clone();
    let id = tx.id();
    for input in &tx.inputs {
        next.units.remove(input);
    }
    for (index, output) in tx.outputs.iter().enumerate() {
        let unit_id = UnitId::new(id, index as u64);
        next.units.insert(
            unit_id,
            Unit {
                id: unit_id,
                kind: output.kind.clone(),
                owner: tx.receiver,
                parents: output.parents.clone(),
            },
        );
    }
    next.applied.insert(id);
    next
}
