//! Blocks, hash-linked chains and head-hash verification.
//!
//! A [`Chain`] is trusted through a single 32-byte head hash: every header
//! commits to its predecessor's header hash and to a digest of its own
//! transaction list, so checking the links back from a trusted head covers
//! every byte of every header and transaction. Commit signatures sit outside
//! the header hash and are checked individually.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{put_list, put_u32, put_u64, Decode, DecodeError, Encode, Reader};
use crate::hash::Hash256;
use crate::identity::{Directory, NodeIdentity, Pseudonym, Signature};
use crate::provenance::{validate_transaction, apply_transaction, RejectReason, Transaction, UnspentUnitSet};

pub const CHAIN_MAGIC: &[u8; 4] = b"PCH1";
/// Encoded size of a [`BlockHeader`].
pub const HEADER_LEN: usize = 32 + 8 + 32 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub prev_hash: Hash256,
    pub height: u64,
    pub payload_hash: Hash256,
    /// Seconds since the epoch. Informational only; never checked.
    pub timestamp: u64,
}

impl BlockHeader {
    pub fn hash(&self) -> Hash256 {
        block_hash(self)
    }
}

impl Encode for BlockHeader {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.prev_hash.0);
        put_u64(out, self.height);
        out.extend_from_slice(&self.payload_hash.0);
        put_u64(out, self.timestamp);
    }
}

impl Decode for BlockHeader {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            prev_hash: Hash256(r.array()?),
            height: r.u64()?,
            payload_hash: Hash256(r.array()?),
            timestamp: r.u64()?,
        })
    }
}

/// SHA-256 of the canonical header encoding.
pub fn block_hash(header: &BlockHeader) -> Hash256 {
    Hash256::digest(&header.canonical_bytes())
}

/// Digest over the canonically encoded transaction list.
pub fn payload_hash(txs: &[Transaction]) -> Hash256 {
    let mut out = Vec::new();
    put_list(&mut out, txs);
    Hash256::digest(&out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    /// Signatures over the block hash by every counterparty of the block.
    pub commit_signatures: Vec<Signature>,
}

impl Block {
    pub fn genesis(timestamp: u64) -> Self {
        Block {
            header: BlockHeader {
                prev_hash: Hash256::ZERO,
                height: 0,
                payload_hash: payload_hash(&[]),
                timestamp,
            },
            transactions: Vec::new(),
            commit_signatures: Vec::new(),
        }
    }

    pub fn hash(&self) -> Hash256 {
        self.header.hash()
    }

    /// Pseudonyms that must co-sign this block: every sender and receiver.
    pub fn counterparties(&self) -> BTreeSet<Pseudonym> {
        self.transactions
            .iter()
            .flat_map(|tx| [tx.sender, tx.receiver])
            .collect()
    }

    /// Builds the successor block of `prev`, signed by `committers`.
    ///
    /// Only the structural rules are checked here; transaction validity
    /// against ledger state is [`append_block`]'s job.
    pub fn seal(
        prev: &Chain,
        txs: Vec<Transaction>,
        committers: &[&NodeIdentity],
        timestamp: u64,
    ) -> Result<Block, AppendError> {
        if txs.is_empty() {
            return Err(AppendError::EmptyBlock);
        }
        let header = BlockHeader {
            prev_hash: prev.head_hash(),
            height: prev.height() + 1,
            payload_hash: payload_hash(&txs),
            timestamp,
        };
        let mut block = Block {
            header,
            transactions: txs,
            commit_signatures: Vec::new(),
        };
        let signers: BTreeSet<Pseudonym> = committers.iter().map(|c| c.pseudonym()).collect();
        if let Some(missing) = block.counterparties().difference(&signers).next() {
            return Err(AppendError::MissingCommitter(*missing));
        }

        let hash = block.hash();
        let mut committers: Vec<&NodeIdentity> = committers.to_vec();
        committers.sort_by_key(|c| c.pseudonym());
        committers.dedup_by_key(|c| c.pseudonym());
        block.commit_signatures = committers
            .into_iter()
            .map(|c| c.sign(&hash.0).expect("block hash is non-empty"))
            .collect();
        Ok(block)
    }
}

impl Encode for Block {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.header.encode_to(out);
        put_list(out, &self.transactions);
        put_list(out, &self.commit_signatures);
    }
}

impl Decode for Block {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Block {
            header: BlockHeader::decode_from(r)?,
            transactions: r.list()?,
            commit_signatures: r.list()?,
        })
    }
}

/// An immutable, non-empty sequence of hash-linked blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
    head_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("block does not extend the current head")]
    PrevMismatch,
    #[error("expected height {expected}, got {got}")]
    Height { expected: u64, got: u64 },
}

impl Chain {
    pub fn genesis(timestamp: u64) -> Self {
        Self::from_blocks(vec![Block::genesis(timestamp)]).expect("non-empty")
    }

    /// Wraps decoded blocks without verifying them. `None` if empty.
    pub fn from_blocks(blocks: Vec<Block>) -> Option<Self> {
        let head_hash = blocks.last()?.hash();
        Some(Chain { blocks, head_hash })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn head_hash(&self) -> Hash256 {
        self.head_hash
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().expect("non-empty").header.height
    }

    pub fn transactions(&self) -> impl Iterator<Item = (u64, &Transaction)> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(move |tx| (b.header.height, tx)))
    }

    /// Returns a new chain extended by `block`; `self` is left untouched.
    pub fn with_block(&self, block: Block) -> Result<Chain, LinkError> {
        if block.header.prev_hash != self.head_hash {
            return Err(LinkError::PrevMismatch);
        }
        let expected = self.height() + 1;
        if block.header.height != expected {
            return Err(LinkError::Height {
                expected,
                got: block.header.height,
            });
        }
        let head_hash = block.hash();
        let mut blocks = self.blocks.clone();
        blocks.push(block);
        Ok(Chain { blocks, head_hash })
    }

    /// Serialises the chain in the `PCH1` file format.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 * self.blocks.len());
        out.extend_from_slice(CHAIN_MAGIC);
        put_u32(&mut out, self.blocks.len() as u32);
        for b in &self.blocks {
            b.encode_to(&mut out);
        }
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Chain, ChainFileError> {
        decode_chain_file(bytes).map_err(|(block_index, source)| ChainFileError {
            block_index,
            source,
        })
    }

    /// One JSON object per line, for human inspection.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            let view = BlockView {
                hash: b.hash(),
                block: b,
            };
            out.push_str(&serde_json::to_string(&view).expect("block serialises"));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize)]
struct BlockView<'a> {
    hash: Hash256,
    #[serde(flatten)]
    block: &'a Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("chain file block {block_index:?}: {source}")]
pub struct ChainFileError {
    /// Index of the block being decoded, or `None` for the file header.
    pub block_index: Option<usize>,
    pub source: DecodeError,
}

/// Byte ranges of each block inside a chain file.
pub fn chain_file_block_spans(bytes: &[u8]) -> Result<Vec<std::ops::Range<usize>>, ChainFileError> {
    let mut r = Reader::new(bytes);
    let count = read_file_header(&mut r).map_err(|source| ChainFileError {
        block_index: None,
        source,
    })?;
    let mut spans = Vec::with_capacity(count);
    for i in 0..count {
        let start = r.position();
        Block::decode_from(&mut r).map_err(|source| ChainFileError {
            block_index: Some(i),
            source,
        })?;
        spans.push(start..r.position());
    }
    Ok(spans)
}

fn read_file_header(r: &mut Reader<'_>) -> Result<usize, DecodeError> {
    if r.take(4)? != CHAIN_MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(DecodeError::InvalidValue {
            offset: 4,
            what: "chain has no blocks",
        });
    }
    if count > r.remaining() {
        return Err(DecodeError::UnexpectedEnd { offset: 8 });
    }
    Ok(count)
}

fn decode_chain_file(bytes: &[u8]) -> Result<Chain, (Option<usize>, DecodeError)> {
    let mut r = Reader::new(bytes);
    let count = read_file_header(&mut r).map_err(|e| (None, e))?;
    let mut blocks = Vec::with_capacity(count);
    for i in 0..count {
        blocks.push(Block::decode_from(&mut r).map_err(|e| (Some(i), e))?);
    }
    r.finish().map_err(|e| (Some(count - 1), e))?;
    Ok(Chain::from_blocks(blocks).expect("count checked non-zero"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCheck {
    /// The bytes do not decode to a chain.
    Decode,
    Height,
    /// Block 0 must have a zero predecessor and no transactions.
    Genesis,
    PrevLink,
    PayloadHash,
    EmptyBlock,
    CommitSignature,
    MissingCommitter,
    HeadMismatch,
}

impl FailedCheck {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailedCheck::Decode => "decode",
            FailedCheck::Height => "height",
            FailedCheck::Genesis => "genesis",
            FailedCheck::PrevLink => "prev_link",
            FailedCheck::PayloadHash => "payload_hash",
            FailedCheck::EmptyBlock => "empty_block",
            FailedCheck::CommitSignature => "commit_signature",
            FailedCheck::MissingCommitter => "missing_committer",
            FailedCheck::HeadMismatch => "head_mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VerificationReport {
    Valid,
    Invalid { index: usize, check: FailedCheck },
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        matches!(self, VerificationReport::Valid)
    }
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerificationReport::Valid => f.write_str("VALID"),
            VerificationReport::Invalid { index, check } => {
                write!(f, "INVALID at block {index}: {}", check.as_str())
            }
        }
    }
}

/// Verifies a chain from a trusted head hash alone.
///
/// Blocks are checked in order and the first failure is reported; the head
/// comparison runs last so that a damaged interior block is named precisely.
pub fn verify_chain(chain: &Chain, trusted_head: &Hash256) -> VerificationReport {
    let mut prev: Option<Hash256> = None;
    for (index, block) in chain.blocks.iter().enumerate() {
        match check_block(block, index as u64, prev) {
            Ok(hash) => prev = Some(hash),
            Err(check) => return VerificationReport::Invalid { index, check },
        }
    }
    if prev != Some(*trusted_head) {
        return VerificationReport::Invalid {
            index: chain.blocks.len().saturating_sub(1),
            check: FailedCheck::HeadMismatch,
        };
    }
    VerificationReport::Valid
}

/// Checks one block in isolation given its expected height and the hash of
/// its predecessor (`None` for genesis). Returns the block's hash.
pub fn check_block(block: &Block, height: u64, prev: Option<Hash256>) -> Result<Hash256, FailedCheck> {
    let h = &block.header;
    if h.height != height {
        return Err(FailedCheck::Height);
    }
    match prev {
        None => {
            if !h.prev_hash.is_zero() || !block.transactions.is_empty() {
                return Err(FailedCheck::Genesis);
            }
        }
        Some(p) => {
            if h.prev_hash != p {
                return Err(FailedCheck::PrevLink);
            }
        }
    }
    if payload_hash(&block.transactions) != h.payload_hash {
        return Err(FailedCheck::PayloadHash);
    }
    if prev.is_some() && block.transactions.is_empty() {
        return Err(FailedCheck::EmptyBlock);
    }
    let hash = block.hash();
    if !block
        .commit_signatures
        .iter()
        .all(|s| s.verify_self_certified(&hash.0))
    {
        return Err(FailedCheck::CommitSignature);
    }
    let signed: BTreeSet<Pseudonym> = block.commit_signatures.iter().map(|s| s.signer).collect();
    if !block.counterparties().is_subset(&signed) {
        return Err(FailedCheck::MissingCommitter);
    }
    Ok(hash)
}

/// Verifies an untrusted chain file. Undecodable input is an
/// [`FailedCheck::Decode`] failure at the block being read.
pub fn verify_chain_bytes(bytes: &[u8], trusted_head: &Hash256) -> VerificationReport {
    match decode_chain_file(bytes) {
        Ok(chain) => verify_chain(&chain, trusted_head),
        Err((index, _)) => VerificationReport::Invalid {
            index: index.unwrap_or(0),
            check: FailedCheck::Decode,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppendError {
    #[error("EmptyBlock: a block needs at least one transaction")]
    EmptyBlock,
    #[error("MissingCommitter: counterparty {0} did not sign the block")]
    MissingCommitter(Pseudonym),
    #[error("InvalidTransaction: transaction {index}: {reason}")]
    InvalidTransaction { index: usize, reason: RejectReason },
}

impl AppendError {
    pub fn code(&self) -> &'static str {
        match self {
            AppendError::EmptyBlock => "EmptyBlock",
            AppendError::MissingCommitter(_) => "MissingCommitter",
            AppendError::InvalidTransaction { reason, .. } => reason.code(),
        }
    }
}

/// Validates `txs` in order against `state`, then seals and appends a block.
pub fn append_block(
    chain: &Chain,
    state: &UnspentUnitSet,
    directory: &Directory,
    txs: Vec<Transaction>,
    committers: &[&NodeIdentity],
    timestamp: u64,
) -> Result<(Chain, UnspentUnitSet), AppendError> {
    if txs.is_empty() {
        return Err(AppendError::EmptyBlock);
    }
    let mut next = state.clone();
    for (index, tx) in txs.iter().enumerate() {
        validate_transaction(&next, tx, directory)
            .map_err(|reason| AppendError::InvalidTransaction { index, reason })?;
        next = apply_transaction(&next, tx);
    }
    let block = Block::seal(chain, txs, committers, timestamp)?;
    let chain = chain.with_block(block).expect("sealed on this head");
    Ok((chain, next))
}

/// A chain paired with the unspent-unit set it folds to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    chain: Chain,
    state: UnspentUnitSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block {block}, transaction {tx}: {reason}")]
pub struct ReplayError {
    pub block: usize,
    pub tx: usize,
    pub reason: RejectReason,
}

impl Ledger {
    pub fn genesis(timestamp: u64) -> Self {
        Ledger {
            chain: Chain::genesis(timestamp),
            state: UnspentUnitSet::new(),
        }
    }

    /// Re-validates every transaction of `chain` from genesis.
    pub fn replay(chain: Chain, directory: &Directory) -> Result<Self, ReplayError> {
        let mut state = UnspentUnitSet::new();
        for (block, b) in chain.blocks().iter().enumerate() {
            for (tx, t) in b.transactions.iter().enumerate() {
                validate_transaction(&state, t, directory)
                    .map_err(|reason| ReplayError { block, tx, reason })?;
                state = apply_transaction(&state, t);
            }
        }
        Ok(Ledger { chain, state })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> &UnspentUnitSet {
        &self.state
    }

    pub fn into_parts(self) -> (Chain, UnspentUnitSet) {
        (self.chain, self.state)
    }

    pub fn append(
        &self,
        directory: &Directory,
        txs: Vec<Transaction>,
        committers: &[&NodeIdentity],
        timestamp: u64,
    ) -> Result<Ledger, AppendError> {
        let (chain, state) =
            append_block(&self.chain, &self.state, directory, txs, committers, timestamp)?;
        Ok(Ledger { chain, state })
    }
}
