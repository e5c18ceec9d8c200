use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::consensus::{ProposeError, QuorumConfig, ReplicaId, ReplicaRecord};
use crate::hash::Hash256;
use crate::identity::{AuditReport, Pseudonym};
use crate::provenance::{RecallReport, RejectReason, UnitId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    CorruptReplica,
    DropReplica,
    InputError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    HashMismatch,
    SignatureFailure,
    QuorumMinority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    /// Script index of the event that injected the fault.
    pub event: usize,
    pub fault: FaultKind,
    pub replica: Option<ReplicaId>,
    pub mechanism: Mechanism,
    /// Script index of the round in which the fault was noticed.
    pub detected_at: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub event: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedTx {
    pub event: usize,
    pub tx: Hash256,
    pub height: u64,
    pub acks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCommit {
    pub event: usize,
    pub error: ProposeError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub role: String,
    pub pseudonym: Pseudonym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginRoot {
    pub unit: UnitId,
    pub minter: Pseudonym,
}

/// Where a live unit ultimately comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitOrigin {
    pub unit: UnitId,
    pub kind: String,
    pub owner: Pseudonym,
    pub roots: Vec<OriginRoot>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub events: usize,
    pub blocks: usize,
    pub transactions: usize,
    pub units: usize,
    pub live_units: usize,
    pub faults_injected: usize,
    pub faults_detected: usize,
    pub repaired_replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub quorum: QuorumConfig,
    pub participants: Vec<ParticipantSummary>,
    pub canonical_head: Option<Hash256>,
    pub replicas: Vec<ReplicaRecord>,
    pub committed: Vec<CommittedTx>,
    pub rejections: Vec<Rejection>,
    pub failed_commits: Vec<FailedCommit>,
    pub detections: Vec<Detection>,
    pub recall: Option<RecallReport>,
    /// Tainted references whose producing transaction never made it on chain.
    pub unresolved_taint: Vec<UnitId>,
    pub origins: Vec<UnitOrigin>,
    pub audit: AuditReport,
    pub counters: Counters,
    pub violations: Vec<String>,
}

impl ScenarioReport {
    pub fn invariants_held(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Transaction committed for script event `event`, if any.
    pub fn tx_for_event(&self, event: usize) -> Option<Hash256> {
        self.committed.iter().find(|c| c.event == event).map(|c| c.tx)
    }

    pub fn role_of(&self, p: &Pseudonym) -> Option<&str> {
        self.participants
            .iter()
            .find(|s| s.pseudonym == *p)
            .map(|s| s.role.as_str())
    }

    pub fn summary(&self) -> String {
        let c = &self.counters;
        let mut out = String::new();
        let _ = writeln!(out, "scenario seed {}", self.seed);
        let _ = writeln!(
            out,
            "quorum: {} of {} replicas ({:?} mode, f = {})",
            self.quorum.quorum_size(),
            self.quorum.replica_count,
            self.quorum.mode,
            self.quorum.fault_bound
        );
        match self.canonical_head {
            Some(h) => {
                let _ = writeln!(out, "canonical head: {h}");
            }
            None => {
                let _ = writeln!(out, "canonical head: none (no quorum)");
            }
        }
        let _ = writeln!(
            out,
            "events {}, blocks {}, transactions {}, units {} ({} live)",
            c.events, c.blocks, c.transactions, c.units, c.live_units
        );
        let _ = writeln!(
            out,
            "faults injected {}, detected {}, replicas repaired {}",
            c.faults_injected, c.faults_detected, c.repaired_replicas
        );
        for r in &self.replicas {
            let _ = writeln!(
                out,
                "  replica {}: {:?}, head {}, {}",
                r.id,
                r.status,
                r.head.short(),
                r.verification
            );
        }
        for d in &self.detections {
            let _ = writeln!(
                out,
                "  fault @{} {:?}{} -> {:?} @{}: {}",
                d.event,
                d.fault,
                d.replica.map(|r| format!(" replica {r}")).unwrap_or_default(),
                d.mechanism,
                d.detected_at,
                d.detail
            );
        }
        for r in &self.rejections {
            let _ = writeln!(out, "  rejected @{}: {}", r.event, r.reason);
        }
        if let Some(recall) = &self.recall {
            let _ = writeln!(
                out,
                "recall: {} tainted -> {} affected ({} live)",
                recall.tainted.len(),
                recall.affected.len(),
                recall.live().count()
            );
            for e in &recall.affected {
                let _ = writeln!(
                    out,
                    "  {:?} {} held by {}",
                    e.unit,
                    e.kind,
                    self.role_of(&e.owner).unwrap_or("?")
                );
            }
        }
        let _ = writeln!(
            out,
            "anonymity audit: {} ({} labels)",
            if self.audit.passed() { "PASS" } else { "FAIL" },
            self.audit.labels_checked
        );
        if self.violations.is_empty() {
            out.push_str("invariants: all held\n");
        } else {
            for v in &self.violations {
                let _ = writeln!(out, "VIOLATION: {v}");
            }
        }
        out
    }
}
