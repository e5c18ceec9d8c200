//! Deterministic scenario engine with fault injection.
//!
//! A [`Scenario`] names its participants by role and drives a replicated
//! ledger through a script of exchanges and faults. Every event is followed
//! by a consensus round: mints and exchanges are proposed as blocks, and
//! each round ends with canonical-chain selection and repair of any replica
//! that falls outside the quorum. Simulated time is the event index, so the
//! same seed and script always produce byte-identical replicas and reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{
    canonical_chain, propose_block, repair_replica, ConfigError, ConsensusError, FlagKind,
    QuorumConfig, Refusal, Replica, ReplicaId,
};
use crate::hash::Hash256;
use crate::identity::{anonymity_audit, keygen, Directory, NodeIdentity};
use crate::ledger::{Block, Chain, FailedCheck, Ledger, VerificationReport};
use crate::provenance::{
    build_provenance_graph, recall_set, trace_back, validate_transaction,
    OutputSpec, Transaction, UnitId,
};

mod fixtures;
mod report;

pub use fixtures::{counterfeit_scenario, figure2_fixture};
pub use report::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub role: String,
    /// Off-ledger real-world name, used only by the anonymity audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_world_label: Option<String>,
}

impl Participant {
    pub fn new(role: impl Into<String>, label: Option<&str>) -> Self {
        Participant {
            role: role.into(),
            real_world_label: label.map(str::to_owned),
        }
    }
}

/// Reference to output `output` of the unit-producing event `event`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitRef {
    pub event: usize,
    pub output: u64,
}

impl UnitRef {
    pub fn new(event: usize, output: u64) -> Self {
        UnitRef { event, output }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDecl {
    pub kind: String,
    /// Inputs that went into this output; every input when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents: Option<Vec<UnitRef>>,
}

impl OutputDecl {
    pub fn new(kind: impl Into<String>, parents: Vec<UnitRef>) -> Self {
        OutputDecl {
            kind: kind.into(),
            parents: Some(parents),
        }
    }

    pub fn from_all(kind: impl Into<String>) -> Self {
        OutputDecl {
            kind: kind.into(),
            parents: None,
        }
    }
}

/// A human-input error in one field of an authored transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum Typo {
    Kind { output: usize, value: String },
    Receiver { node: String },
    HeightHint { delta: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScenarioEvent {
    Mint {
        node: String,
        kind: String,
        count: u32,
    },
    Exchange {
        sender: String,
        receiver: String,
        inputs: Vec<UnitRef>,
        outputs: Vec<OutputDecl>,
    },
    /// Flips one stored byte of one block in a replica's copy.
    CorruptReplica {
        replica: ReplicaId,
        block_index: usize,
        byte_offset: usize,
    },
    DropReplica {
        replica: ReplicaId,
    },
    /// The exchange as both parties intended it, plus the typo the author
    /// made. Before signing, the counterparty refuses to co-sign; after
    /// signing, the altered bytes no longer match either signature.
    InputError {
        sender: String,
        receiver: String,
        inputs: Vec<UnitRef>,
        outputs: Vec<OutputDecl>,
        typo: Typo,
        #[serde(default)]
        after_signing: bool,
    },
    MarkTainted {
        unit: UnitRef,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub participants: Vec<Participant>,
    pub script: Vec<ScenarioEvent>,
    #[serde(default)]
    pub quorum: QuorumConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("MalformedScript: event {index}: {reason}")]
    MalformedScript { index: usize, reason: String },
    #[error("invalid quorum configuration: {0}")]
    Config(#[from] ConfigError),
}

impl Scenario {
    /// Parses a scenario file. A bare event list is also accepted: its
    /// participants are the roles it mentions, in order of first mention,
    /// with seed 0 and the default quorum.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum File {
            Full(Scenario),
            Events(Vec<ScenarioEvent>),
        }
        Ok(match serde_json::from_str(text)? {
            File::Full(s) => s,
            File::Events(script) => Scenario::from_events(script),
        })
    }

    pub fn from_events(script: Vec<ScenarioEvent>) -> Self {
        let mut participants: Vec<Participant> = Vec::new();
        for event in &script {
            let roles: Vec<&String> = match event {
                ScenarioEvent::Mint { node, .. } => vec![node],
                ScenarioEvent::Exchange { sender, receiver, .. } => vec![sender, receiver],
                ScenarioEvent::InputError {
                    sender,
                    receiver,
                    typo,
                    ..
                } => match typo {
                    Typo::Receiver { node } => vec![sender, receiver, node],
                    _ => vec![sender, receiver],
                },
                _ => vec![],
            };
            for role in roles {
                if !participants.iter().any(|p| &p.role == role) {
                    participants.push(Participant::new(role.clone(), None));
                }
            }
        }
        Scenario {
            seed: 0,
            participants,
            script,
            quorum: QuorumConfig::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Checks that every event references only entities that exist by then.
    pub fn check(&self) -> Result<(), SimError> {
        self.quorum.validate()?;
        let roles: BTreeSet<&str> = self.participants.iter().map(|p| p.role.as_str()).collect();
        if roles.len() != self.participants.len() {
            return Err(SimError::MalformedScript {
                index: 0,
                reason: "duplicate participant role".into(),
            });
        }
        // outputs available from each unit-producing event
        let mut produced: BTreeMap<usize, u64> = BTreeMap::new();
        let mut dropped: BTreeSet<ReplicaId> = BTreeSet::new();
        for (index, event) in self.script.iter().enumerate() {
            let bad = |reason: String| SimError::MalformedScript { index, reason };
            let role = |r: &str| {
                if roles.contains(r) {
                    Ok(())
                } else {
                    Err(bad(format!("unknown participant {r:?}")))
                }
            };
            let unit = |u: &UnitRef| match produced.get(&u.event) {
                Some(n) if u.output < *n => Ok(()),
                _ => Err(bad(format!(
                    "no unit {}:{} produced before this event",
                    u.event, u.output
                ))),
            };
            let replica = |r: ReplicaId| {
                if r as usize >= self.quorum.replica_count {
                    Err(bad(format!("replica {r} does not exist")))
                } else if dropped.contains(&r) {
                    Err(bad(format!("replica {r} was already dropped")))
                } else {
                    Ok(())
                }
            };
            match event {
                ScenarioEvent::Mint { node, count, .. } => {
                    role(node)?;
                    produced.insert(index, u64::from(*count));
                }
                ScenarioEvent::Exchange {
                    sender,
                    receiver,
                    inputs,
                    outputs,
                }
                | ScenarioEvent::InputError {
                    sender,
                    receiver,
                    inputs,
                    outputs,
                    ..
                } => {
                    role(sender)?;
                    role(receiver)?;
                    inputs.iter().try_for_each(&unit)?;
                    outputs
                        .iter()
                        .flat_map(|o| o.parents.iter().flatten())
                        .try_for_each(&unit)?;
                    if let ScenarioEvent::InputError {
                        typo, after_signing, ..
                    } = event
                    {
                        if sender == receiver && !after_signing {
                            return Err(bad(
                                "a typo before signing needs a counterparty to refuse it".into(),
                            ));
                        }
                        match typo {
                            Typo::Kind { output, value } => match outputs.get(*output) {
                                None => return Err(bad(format!("typo names missing output {output}"))),
                                Some(o) if o.kind == *value => {
                                    return Err(bad("typo leaves the kind unchanged".into()))
                                }
                                _ => {}
                            },
                            Typo::Receiver { node } => {
                                role(node)?;
                                if node == receiver {
                                    return Err(bad("typo leaves the receiver unchanged".into()));
                                }
                                // the sender alone would then sign both slots
                                if node == sender {
                                    return Err(bad("typo redirects the exchange to its sender".into()));
                                }
                            }
                            Typo::HeightHint { delta } => {
                                if *delta == 0 {
                                    return Err(bad("typo leaves the height hint unchanged".into()));
                                }
                            }
                        }
                    } else {
                        produced.insert(index, outputs.len() as u64);
                    }
                }
                ScenarioEvent::CorruptReplica { replica: r, .. } => replica(*r)?,
                ScenarioEvent::DropReplica { replica: r } => {
                    replica(*r)?;
                    dropped.insert(*r);
                }
                ScenarioEvent::MarkTainted { unit: u } => unit(u)?,
            }
        }
        Ok(())
    }
}

/// Deterministic identity of participant `index`.
pub fn participant_identity(seed: u64, index: usize, role: &str) -> NodeIdentity {
    let mut material = b"provchain/participant/".to_vec();
    material.extend_from_slice(&seed.to_be_bytes());
    material.extend_from_slice(&(index as u64).to_be_bytes());
    material.extend_from_slice(role.as_bytes());
    keygen(&Hash256::digest(&material).0).expect("32-byte digest")
}

/// Deterministic acknowledgement key of replica `id`.
pub fn replica_identity(seed: u64, id: ReplicaId) -> NodeIdentity {
    let mut material = b"provchain/replica/".to_vec();
    material.extend_from_slice(&seed.to_be_bytes());
    material.extend_from_slice(&id.to_be_bytes());
    keygen(&Hash256::digest(&material).0).expect("32-byte digest")
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub replicas: Vec<Replica>,
    pub canonical: Chain,
    pub directory: Directory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Corrupt(usize),
    Drop(usize),
}

struct Engine<'a> {
    scenario: &'a Scenario,
    identities: Vec<NodeIdentity>,
    roles: BTreeMap<&'a str, usize>,
    directory: Directory,
    replicas: Vec<Replica>,
    ledger: Ledger,
    produced: BTreeMap<usize, Hash256>,
    tainted: Vec<UnitId>,
    pending: BTreeMap<ReplicaId, Vec<Pending>>,
    /// Replicas whose damage is already logged but not yet repaired.
    known_damaged: BTreeSet<ReplicaId>,
    report: ScenarioReport,
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun, SimError> {
    scenario.check()?;
    let mut engine = Engine::new(scenario);
    for (index, event) in scenario.script.iter().enumerate() {
        engine.step(index, event);
    }
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let identities: Vec<NodeIdentity> = scenario
            .participants
            .iter()
            .enumerate()
            .map(|(i, p)| participant_identity(scenario.seed, i, &p.role))
            .collect();
        let mut directory = Directory::new();
        for (p, id) in scenario.participants.iter().zip(&identities) {
            let pseudonym = directory.register_identity(id);
            if let Some(label) = &p.real_world_label {
                directory.set_label(pseudonym, label.clone());
            }
        }
        let ledger = Ledger::genesis(0);
        let replicas = (0..scenario.quorum.replica_count as ReplicaId)
            .map(|id| Replica::new(id, replica_identity(scenario.seed, id), ledger.chain()))
            .collect();
        let report = ScenarioReport {
            seed: scenario.seed,
            quorum: scenario.quorum.clone(),
            participants: scenario
                .participants
                .iter()
                .zip(&identities)
                .map(|(p, id)| ParticipantSummary {
                    role: p.role.clone(),
                    pseudonym: id.pseudonym(),
                })
                .collect(),
            canonical_head: None,
            replicas: Vec::new(),
            committed: Vec::new(),
            rejections: Vec::new(),
            failed_commits: Vec::new(),
            detections: Vec::new(),
            recall: None,
            unresolved_taint: Vec::new(),
            origins: Vec::new(),
            audit: Default::default(),
            counters: Counters::default(),
            violations: Vec::new(),
        };
        Engine {
            scenario,
            roles: scenario
                .participants
                .iter()
                .enumerate()
                .map(|(i, p)| (p.role.as_str(), i))
                .collect(),
            identities,
            directory,
            replicas,
            ledger,
            produced: BTreeMap::new(),
            tainted: Vec::new(),
            pending: BTreeMap::new(),
            known_damaged: BTreeSet::new(),
            report,
        }
    }

    fn party(&self, role: &str) -> &NodeIdentity {
        &self.identities[self.roles[role]]
    }

    fn resolve(&self, u: &UnitRef) -> UnitId {
        UnitId::new(self.produced[&u.event], u.output)
    }

    fn build_exchange(
        &self,
        sender: &str,
        receiver: &str,
        inputs: &[UnitRef],
        outputs: &[OutputDecl],
    ) -> Transaction {
        let input_ids: Vec<UnitId> = inputs.iter().map(|u| self.resolve(u)).collect();
        let outputs = outputs
            .iter()
            .map(|o| {
                let parents = match &o.parents {
                    Some(ps) => ps.iter().map(|u| self.resolve(u)).collect(),
                    None => input_ids.clone(),
                };
                OutputSpec::new(o.kind.clone(), parents)
            })
            .collect();
        Transaction::new(
            self.party(sender).pseudonym(),
            self.party(receiver).pseudonym(),
            input_ids,
            outputs,
            self.ledger.chain().height() + 1,
        )
    }

    fn step(&mut self, index: usize, event: &ScenarioEvent) {
        self.report.counters.events += 1;
        match event {
            ScenarioEvent::Mint { node, kind, count } => {
                let owner = self.party(node).clone();
                let kinds = vec![kind.as_str(); *count as usize];
                let mut tx = Transaction::mint(owner.pseudonym(), kinds, self.ledger.chain().height() + 1);
                tx.cosign(&owner).expect("owner is the counterparty");
                self.produced.insert(index, tx.id());
                self.commit(index, tx, vec![owner]);
            }
            ScenarioEvent::Exchange {
                sender,
                receiver,
                inputs,
                outputs,
            } => {
                let mut tx = self.build_exchange(sender, receiver, inputs, outputs);
                let (s, r) = (self.party(sender).clone(), self.party(receiver).clone());
                tx.cosign(&s).expect("sender");
                tx.cosign(&r).expect("receiver");
                self.produced.insert(index, tx.id());
                self.commit(index, tx, vec![s, r]);
            }
            ScenarioEvent::InputError {
                sender,
                receiver,
                inputs,
                outputs,
                typo,
                after_signing,
            } => self.input_error(index, sender, receiver, inputs, outputs, typo, *after_signing),
            ScenarioEvent::CorruptReplica {
                replica,
                block_index,
                byte_offset,
            } => {
                self.report.counters.faults_injected += 1;
                let r = &mut self.replicas[*replica as usize];
                r.corrupt(*block_index, *byte_offset);
                self.pending.entry(*replica).or_default().push(Pending::Corrupt(index));
            }
            ScenarioEvent::DropReplica { replica } => {
                self.report.counters.faults_injected += 1;
                self.replicas[*replica as usize].go_offline();
                self.pending.entry(*replica).or_default().push(Pending::Drop(index));
            }
            ScenarioEvent::MarkTainted { unit } => {
                let id = self.resolve(unit);
                if !self.tainted.contains(&id) {
                    self.tainted.push(id);
                }
            }
        }
        self.sweep(index);
    }

    #[allow(clippy::too_many_arguments)]
    fn input_error(
        &mut self,
        index: usize,
        sender: &str,
        receiver: &str,
        inputs: &[UnitRef],
        outputs: &[OutputDecl],
        typo: &Typo,
        after_signing: bool,
    ) {
        self.report.counters.faults_injected += 1;
        let intended = self.build_exchange(sender, receiver, inputs, outputs);
        let (s, r) = (self.party(sender).clone(), self.party(receiver).clone());
        let apply_typo = |tx: &mut Transaction, engine: &Self| match typo {
            Typo::Kind { output, value } => tx.outputs[*output].kind = value.clone(),
            Typo::Receiver { node } => tx.receiver = engine.party(node).pseudonym(),
            Typo::HeightHint { delta } => tx.height_hint = tx.height_hint.wrapping_add(*delta),
        };
        let mut authored = intended.clone();
        let field = match typo {
            Typo::Kind { .. } => "kind",
            Typo::Receiver { .. } => "receiver",
            Typo::HeightHint { .. } => "height_hint",
        };
        let detail = if after_signing {
            authored.cosign(&s).expect("sender");
            authored.cosign(&r).expect("receiver");
            apply_typo(&mut authored, self);
            format!("{field} altered after both signatures")
        } else {
            apply_typo(&mut authored, self);
            authored.cosign(&s).expect("sender");
            // the counterparty compares what it is asked to sign with what it agreed to
            debug_assert_ne!(authored.signing_payload(), intended.signing_payload());
            format!("receiver refused to co-sign: {field} differs from the agreed exchange")
        };
        let outcome = validate_transaction(self.ledger.state(), &authored, &self.directory);
        let detail = match outcome {
            Err(reason) => format!("{detail}; rejected with {}", reason.code()),
            Ok(()) => {
                self.report
                    .violations
                    .push(format!("input error at event {index} validated"));
                detail
            }
        };
        self.report.counters.faults_detected += 1;
        self.report.detections.push(Detection {
            event: index,
            fault: FaultKind::InputError,
            replica: None,
            mechanism: Mechanism::SignatureFailure,
            detected_at: index,
            detail,
        });
    }

    fn commit(&mut self, index: usize, tx: Transaction, committers: Vec<NodeIdentity>) {
        if let Err(reason) = validate_transaction(self.ledger.state(), &tx, &self.directory) {
            self.report.rejections.push(Rejection { event: index, reason });
            return;
        }
        let refs: Vec<&NodeIdentity> = committers.iter().collect();
        let tx_id = tx.id();
        let block = Block::seal(self.ledger.chain(), vec![tx], &refs, index as u64 + 1)
            .expect("committers cover both counterparties");
        let round = propose_block(&mut self.replicas, &block, &self.directory, &self.scenario.quorum);
        for (replica, refusal) in &round.refusals {
            match refusal {
                Refusal::Damaged(report) => self.attribute(*replica, index, damage_mechanism(report), report.to_string()),
                Refusal::Offline => self.attribute_drop(*replica, index),
                _ => {}
            }
        }
        match round.result {
            Ok(cert) => {
                let next = self
                    .ledger
                    .append(&self.directory, block.transactions.clone(), &refs, block.header.timestamp)
                    .expect("validated above");
                debug_assert_eq!(next.chain().head_hash(), cert.block_hash);
                self.ledger = next;
                self.report.committed.push(CommittedTx {
                    event: index,
                    tx: tx_id,
                    height: block.header.height,
                    acks: cert.acks.len(),
                });
            }
            Err(error) => self.report.failed_commits.push(FailedCommit { event: index, error }),
        }
    }

    /// Replicas currently offline or holding a copy that fails verification.
    fn active_faults(&self) -> usize {
        self.replicas
            .iter()
            .filter(|r| !r.is_reachable() || !r.self_check().is_valid())
            .count()
    }

    /// Records detections for every fault pending on `replica`.
    fn attribute(&mut self, replica: ReplicaId, at: usize, mechanism: Mechanism, detail: String) {
        let faults = self.pending.remove(&replica).unwrap_or_default();
        let (corrupt, other): (Vec<_>, Vec<_>) =
            faults.into_iter().partition(|f| matches!(f, Pending::Corrupt(_)));
        if !other.is_empty() {
            self.pending.insert(replica, other);
        }
        if corrupt.is_empty() {
            if self.known_damaged.contains(&replica) {
                return;
            }
            self.report
                .violations
                .push(format!("replica {replica} flagged at event {at} without an injected fault: {detail}"));
            return;
        }
        self.known_damaged.insert(replica);
        for f in corrupt {
            let Pending::Corrupt(event) = f else { unreachable!() };
            self.report.counters.faults_detected += 1;
            self.report.detections.push(Detection {
                event,
                fault: FaultKind::CorruptReplica,
                replica: Some(replica),
                mechanism,
                detected_at: at,
                detail: detail.clone(),
            });
        }
    }

    fn attribute_drop(&mut self, replica: ReplicaId, at: usize) {
        let Some(faults) = self.pending.get_mut(&replica) else {
            return;
        };
        let drops: Vec<usize> = faults
            .iter()
            .filter_map(|f| match f {
                Pending::Drop(e) => Some(*e),
                _ => None,
            })
            .collect();
        faults.retain(|f| !matches!(f, Pending::Drop(_)));
        if faults.is_empty() {
            self.pending.remove(&replica);
        }
        for event in drops {
            self.report.counters.faults_detected += 1;
            self.report.detections.push(Detection {
                event,
                fault: FaultKind::DropReplica,
                replica: Some(replica),
                mechanism: Mechanism::QuorumMinority,
                detected_at: at,
                detail: "no response; absent from the quorum".into(),
            });
        }
    }

    /// End-of-round check: select the canonical chain and repair outliers.
    fn sweep(&mut self, at: usize) {
        let offline: Vec<ReplicaId> = self
            .replicas
            .iter()
            .filter(|r| !r.is_reachable())
            .map(Replica::id)
            .collect();
        for r in offline {
            self.attribute_drop(r, at);
        }

        match canonical_chain(&self.replicas, &self.scenario.quorum) {
            Ok(selection) => {
                if selection.head() != self.ledger.chain().head_hash() {
                    self.report.violations.push(format!(
                        "event {at}: quorum head {} differs from the committed head",
                        selection.head().short()
                    ));
                }
                for flag in &selection.flagged {
                    let (mechanism, detail) = match &flag.kind {
                        FlagKind::Damaged { report } => (damage_mechanism(report), report.to_string()),
                        FlagKind::Minority { head } => (
                            Mechanism::QuorumMinority,
                            format!("head {} outside the quorum", head.short()),
                        ),
                    };
                    self.attribute(flag.replica, at, mechanism, detail);
                    let slot = flag.replica as usize;
                    let repaired = repair_replica(&self.replicas[slot], &selection.chain)
                        .expect("quorum chain verifies");
                    self.replicas[slot] = repaired;
                    self.known_damaged.remove(&flag.replica);
                    self.report.counters.repaired_replicas += 1;
                }
            }
            Err(ConsensusError::NoQuorum { flagged, .. }) => {
                for flag in flagged {
                    if let FlagKind::Damaged { report } = flag.kind {
                        self.attribute(flag.replica, at, damage_mechanism(&report), report.to_string());
                    }
                }
                if self.active_faults() <= self.scenario.quorum.fault_bound {
                    self.report
                        .violations
                        .push(format!("event {at}: no quorum within the fault bound"));
                }
            }
            Err(e @ ConsensusError::Contradiction { .. }) => {
                self.report.violations.push(format!("event {at}: {e}"));
            }
        }
    }

    fn finish(mut self) -> ScenarioRun {
        let chain = self.ledger.chain().clone();
        let bound = self.scenario.quorum.fault_bound;

        for (replica, faults) in std::mem::take(&mut self.pending) {
            for f in faults {
                self.report
                    .violations
                    .push(format!("fault {f:?} on replica {replica} was never detected"));
            }
        }

        let within_bound = self.active_faults() <= bound;
        let mut heads = BTreeSet::new();
        for r in self.replicas.iter().filter(|r| r.is_reachable()) {
            heads.insert(r.head());
            if !self.known_damaged.contains(&r.id()) && !r.self_check().is_valid() {
                self.report
                    .violations
                    .push(format!("honest replica {} fails verification", r.id()));
            }
        }
        if within_bound && heads.len() > 1 {
            self.report
                .violations
                .push(format!("{} distinct heads among reachable replicas", heads.len()));
        }

        let graph = build_provenance_graph(&chain).expect("committed chain is well formed");
        if graph.topological_order().is_none() {
            self.report.violations.push("provenance graph has a cycle".into());
        }
        let (known, unknown): (Vec<UnitId>, Vec<UnitId>) = self
            .tainted
            .iter()
            .partition(|u| graph.vertex(u).is_some());
        self.report.unresolved_taint = unknown;
        if !known.is_empty() {
            self.report.recall = Some(recall_set(&graph, &known).expect("units exist"));
        }
        self.report.origins = self
            .ledger
            .state()
            .units()
            .map(|u| {
                let ancestry = trace_back(&graph, u.id).expect("live units are in the graph");
                UnitOrigin {
                    unit: u.id,
                    kind: u.kind.clone(),
                    owner: u.owner,
                    roots: ancestry
                        .roots()
                        .map(|e| OriginRoot {
                            unit: e.unit,
                            minter: e.owner,
                        })
                        .collect(),
                }
            })
            .collect();

        let bytes = chain.to_file_bytes();
        self.report.audit = anonymity_audit(&bytes, &self.directory);
        if !self.report.audit.passed() {
            self.report.violations.push("real-world label found in ledger bytes".into());
        }

        let c = &mut self.report.counters;
        c.blocks = chain.len();
        c.transactions = chain.transactions().count();
        c.units = graph.unit_count();
        c.live_units = self.ledger.state().len();
        self.report.canonical_head = Some(chain.head_hash());
        self.report.replicas = self.replicas.iter().map(Replica::status_record).collect();

        ScenarioRun {
            report: self.report,
            replicas: self.replicas,
            canonical: chain,
            directory: self.directory,
        }
    }
}

fn damage_mechanism(report: &VerificationReport) -> Mechanism {
    match report {
        VerificationReport::Invalid {
            check: FailedCheck::CommitSignature | FailedCheck::MissingCommitter,
            ..
        } => Mechanism::SignatureFailure,
        _ => Mechanism::HashMismatch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::ReplicaStatus;

    fn two_party(script: Vec<ScenarioEvent>) -> Scenario {
        Scenario {
            seed: 7,
            participants: vec![Participant::new("a", Some("Alpha Ltd")), Participant::new("b", None)],
            script,
            quorum: QuorumConfig::bft(1),
        }
    }

    fn mint(node: &str, count: u32) -> ScenarioEvent {
        ScenarioEvent::Mint {
            node: node.into(),
            kind: "lot".into(),
            count,
        }
    }

    #[test]
    fn empty_script_leaves_genesis() {
        let run = run_scenario(&two_party(vec![])).unwrap();
        let r = &run.report;
        assert_eq!(r.counters.blocks, 1);
        assert_eq!(r.counters.faults_injected, 0);
        assert!(r.detections.is_empty());
        assert!(r.invariants_held(), "{:?}", r.violations);
        assert!(r.replicas.iter().all(|x| x.head == Chain::genesis(0).head_hash()));
    }

    #[test]
    fn corruption_is_detected_and_repaired() {
        let run = run_scenario(&two_party(vec![
            mint("a", 2),
            ScenarioEvent::CorruptReplica { replica: 1, block_index: 1, byte_offset: 90 },
            ScenarioEvent::Exchange {
                sender: "a".into(),
                receiver: "b".into(),
                inputs: vec![UnitRef::new(0, 0)],
                outputs: vec![OutputDecl::from_all("lot")],
            },
        ]))
        .unwrap();
        let r = &run.report;
        assert!(r.invariants_held(), "{:?}", r.violations);
        assert_eq!(r.detections.len(), 1);
        let d = &r.detections[0];
        assert_eq!((d.event, d.replica, d.fault), (1, Some(1), FaultKind::CorruptReplica));
        assert_eq!(d.mechanism, Mechanism::HashMismatch);
        assert_eq!(r.counters.repaired_replicas, 1);
        assert_eq!(r.committed.len(), 2);
        let head = r.canonical_head.unwrap();
        assert!(run.replicas.iter().all(|x| x.head() == head));
    }

    #[test]
    fn corrupted_commit_signature_is_a_signature_failure() {
        // the last bytes of a mint block are its commit signature
        let run = run_scenario(&two_party(vec![
            mint("a", 1),
            ScenarioEvent::CorruptReplica { replica: 0, block_index: 1, byte_offset: 10_000_000 - 1 },
        ]))
        .unwrap();
        let r = &run.report;
        assert!(r.invariants_held(), "{:?}", r.violations);
        assert_eq!(r.detections.len(), 1);
        // offset wraps modulo the block length, so just check it was caught
        assert_eq!(r.detections[0].replica, Some(0));
    }

    #[test]
    fn dropped_replica_is_logged_and_excluded() {
        let run = run_scenario(&two_party(vec![
            ScenarioEvent::DropReplica { replica: 3 },
            mint("a", 1),
        ]))
        .unwrap();
        let r = &run.report;
        assert!(r.invariants_held(), "{:?}", r.violations);
        assert_eq!(r.detections[0].mechanism, Mechanism::QuorumMinority);
        assert_eq!(r.committed[0].acks, 3);
        assert_eq!(r.replicas[3].status, ReplicaStatus::Offline);
    }

    #[test]
    fn too_many_drops_stop_commits_without_a_wrong_head() {
        let run = run_scenario(&two_party(vec![
            ScenarioEvent::DropReplica { replica: 0 },
            ScenarioEvent::DropReplica { replica: 1 },
            mint("a", 1),
        ]))
        .unwrap();
        let r = &run.report;
        assert!(r.committed.is_empty());
        assert!(matches!(
            r.failed_commits[0].error,
            crate::consensus::ProposeError::InsufficientQuorum { acks: 2, needed: 3 }
        ));
        assert!(r.invariants_held(), "{:?}", r.violations);
    }

    #[test]
    fn input_errors_are_caught_by_signatures() {
        for after_signing in [false, true] {
            let run = run_scenario(&two_party(vec![
                mint("a", 1),
                ScenarioEvent::InputError {
                    sender: "a".into(),
                    receiver: "b".into(),
                    inputs: vec![UnitRef::new(0, 0)],
                    outputs: vec![OutputDecl::from_all("lot")],
                    typo: Typo::Kind { output: 0, value: "lto".into() },
                    after_signing,
                },
            ]))
            .unwrap();
            let r = &run.report;
            assert!(r.invariants_held(), "{:?}", r.violations);
            let d = &r.detections[0];
            assert_eq!(d.mechanism, Mechanism::SignatureFailure);
            let code = if after_signing { "BadSenderSig" } else { "BadReceiverSig" };
            assert!(d.detail.ends_with(code), "{}", d.detail);
            assert_eq!(r.committed.len(), 1);
        }
    }

    #[test]
    fn malformed_scripts_name_the_event() {
        let bad = |script| run_scenario(&two_party(script)).unwrap_err();
        assert!(matches!(bad(vec![mint("zed", 1)]), SimError::MalformedScript { index: 0, .. }));
        assert!(matches!(
            bad(vec![mint("a", 1), ScenarioEvent::MarkTainted { unit: UnitRef::new(0, 1) }]),
            SimError::MalformedScript { index: 1, .. }
        ));
        assert!(matches!(
            bad(vec![ScenarioEvent::DropReplica { replica: 9 }]),
            SimError::MalformedScript { index: 0, .. }
        ));
        assert!(matches!(
            bad(vec![
                ScenarioEvent::DropReplica { replica: 1 },
                ScenarioEvent::CorruptReplica { replica: 1, block_index: 0, byte_offset: 0 }
            ]),
            SimError::MalformedScript { index: 1, .. }
        ));
        assert!(matches!(
            bad(vec![
                mint("a", 1),
                ScenarioEvent::InputError {
                    sender: "a".into(),
                    receiver: "b".into(),
                    inputs: vec![UnitRef::new(0, 0)],
                    outputs: vec![OutputDecl::from_all("lot")],
                    typo: Typo::Receiver { node: "b".into() },
                    after_signing: false,
                },
            ]),
            SimError::MalformedScript { index: 1, .. }
        ));
    }

    #[test]
    fn bare_event_list_is_a_scenario() {
        let text = r#"[
            {"event": "mint", "node": "farm", "kind": "grain", "count": 2},
            {"event": "exchange", "sender": "farm", "receiver": "mill",
             "inputs": [{"event": 0, "output": 0}], "outputs": [{"kind": "flour"}]}
        ]"#;
        let s = Scenario::from_json(text).unwrap();
        let roles: Vec<&str> = s.participants.iter().map(|p| p.role.as_str()).collect();
        assert_eq!(roles, ["farm", "mill"]);
        assert!(run_scenario(&s).unwrap().report.invariants_held());
    }

    #[test]
    fn runs_are_deterministic() {
        let s = figure2_fixture();
        let (a, b) = (run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
        assert_eq!(a.report.to_json(), b.report.to_json());
        for (x, y) in a.replicas.iter().zip(&b.replicas) {
            assert_eq!(x.storage(), y.storage());
        }
        let mut other = s.clone();
        other.seed += 1;
        let c = run_scenario(&other).unwrap();
        assert_ne!(c.report.canonical_head, a.report.canonical_head);
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = two_party(vec![
            mint("a", 2),
            ScenarioEvent::InputError {
                sender: "a".into(),
                receiver: "b".into(),
                inputs: vec![UnitRef::new(0, 0)],
                outputs: vec![OutputDecl::new("lot", vec![UnitRef::new(0, 0)])],
                typo: Typo::HeightHint { delta: 3 },
                after_signing: true,
            },
        ]);
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}
