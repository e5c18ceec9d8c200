//! Three operations for the demo page, all over the contamination fixture:
//! recall from clicked units, tamper-then-verify, and quorum selection under
//! injected replica faults. Every export takes and returns plain strings so
//! the page needs no generated bindings beyond the functions themselves.

use std::collections::BTreeSet;

use provchain::consensus::{canonical_chain, repair_replica, ConsensusError, QuorumConfig, Replica, ReplicaStatus};
use provchain::ledger::{chain_file_block_spans, verify_chain_bytes};
use provchain::simnet::{figure2_fixture, replica_identity, run_scenario, ScenarioRun};
use provchain::{build_provenance_graph, recall_set, Chain, UnitId};
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn fixture() -> ScenarioRun {
    run_scenario(&figure2_fixture()).expect("fixture is well formed")
}

fn role(run: &ScenarioRun, owner: &provchain::Pseudonym) -> String {
    run.report.role_of(owner).unwrap_or("?").to_owned()
}

#[derive(Serialize)]
struct Node {
    id: UnitId,
    kind: String,
    owner: String,
    height: u64,
    live: bool,
}

/// The fixture's provenance graph: units, parent edges and the tainted set.
#[wasm_bindgen]
pub fn fixture_graph() -> String {
    let run = fixture();
    let graph = build_provenance_graph(&run.canonical).expect("committed chain");
    let nodes: Vec<Node> = graph
        .vertices()
        .map(|v| Node {
            id: v.unit.id,
            kind: v.unit.kind.clone(),
            owner: role(&run, &v.unit.owner),
            height: v.height,
            live: v.consumed_by.is_none(),
        })
        .collect();
    let edges: Vec<(UnitId, UnitId)> = graph.edges().collect();
    let tainted = run.report.recall.as_ref().map(|r| r.tainted.clone()).unwrap_or_default();
    json!({
        "nodes": nodes,
        "edges": edges,
        "tainted": tainted,
        "head": run.canonical.head_hash(),
        "blocks": run.canonical.len(),
    })
    .to_string()
}

/// Recall for a JSON array of unit ids.
#[wasm_bindgen]
pub fn recall(units_json: &str) -> String {
    let units: Vec<UnitId> = match serde_json::from_str(units_json) {
        Ok(u) => u,
        Err(e) => return error(format!("bad unit list: {e}")),
    };
    let run = fixture();
    let graph = build_provenance_graph(&run.canonical).expect("committed chain");
    match recall_set(&graph, &units) {
        Ok(report) => {
            let affected: Vec<Value> = report
                .affected
                .iter()
                .map(|e| {
                    json!({
                        "unit": e.unit,
                        "kind": e.kind,
                        "owner": role(&run, &e.owner),
                        "live": e.status == provchain::provenance::UnitStatus::Live,
                    })
                })
                .collect();
            json!({ "tainted": report.tainted, "affected": affected }).to_string()
        }
        Err(e) => error(e.to_string()),
    }
}

/// Flips one bit of block `block` (bit index taken modulo the block size)
/// and verifies the result against the untouched head.
#[wasm_bindgen]
pub fn tamper(block: u32, bit: u32) -> String {
    let run = fixture();
    let bytes = run.canonical.to_file_bytes();
    let spans = chain_file_block_spans(&bytes).expect("own encoding");
    let span = &spans[block as usize % spans.len()];
    let offset = span.start + (bit as usize / 8) % span.len();
    let mut mutated = bytes.clone();
    mutated[offset] ^= 1 << (bit % 8);
    let head = run.canonical.head_hash();
    json!({
        "block": block as usize % spans.len(),
        "offset": offset,
        "block_len": span.len(),
        "original": verify_chain_bytes(&bytes, &head),
        "mutated": verify_chain_bytes(&mutated, &head),
        "head": head,
    })
    .to_string()
}

/// Builds `3f + 1` replicas of the fixture chain, corrupts and drops the
/// listed ones (comma-separated ids), selects the canonical chain and
/// repairs every flagged replica.
#[wasm_bindgen]
pub fn quorum(fault_bound: u32, corrupt: &str, drop: &str) -> String {
    let config = QuorumConfig::bft(fault_bound.clamp(1, 5) as usize);
    let (corrupt, drop) = match (ids(corrupt, config.replica_count), ids(drop, config.replica_count)) {
        (Ok(c), Ok(d)) => (c, d),
        (Err(e), _) | (_, Err(e)) => return error(e),
    };
    let run = fixture();
    let mut replicas = replicas(&run.canonical, config.replica_count);
    for (i, r) in replicas.iter_mut().enumerate() {
        if drop.contains(&i) {
            r.go_offline();
        } else if corrupt.contains(&i) {
            r.corrupt(i + 1, 97 * (i + 1));
        }
    }
    let before: Vec<Value> = replicas.iter().map(replica_view).collect();
    let outcome = match canonical_chain(&replicas, &config) {
        Ok(sel) => {
            for flag in &sel.flagged {
                let slot = flag.replica as usize;
                replicas[slot] = repair_replica(&replicas[slot], &sel.chain).expect("selected chain verifies");
            }
            json!({
                "selected": sel.head(),
                "honest": sel.head() == run.canonical.head_hash(),
                "supporters": sel.supporters,
                "repaired": sel.flagged.iter().map(|f| f.replica).collect::<Vec<_>>(),
            })
        }
        Err(ConsensusError::NoQuorum { needed, .. }) => json!({ "no_quorum": true, "needed": needed }),
        Err(e) => return error(e.to_string()),
    };
    json!({
        "replica_count": config.replica_count,
        "quorum": config.quorum_size(),
        "fault_bound": config.fault_bound,
        "before": before,
        "after": replicas.iter().map(replica_view).collect::<Vec<_>>(),
        "outcome": outcome,
    })
    .to_string()
}

fn replicas(chain: &Chain, n: usize) -> Vec<Replica> {
    (0..n as u32)
        .map(|id| Replica::new(id, replica_identity(0, id), chain))
        .collect()
}

fn replica_view(r: &Replica) -> Value {
    let report = r.self_check();
    json!({
        "id": r.id(),
        "head": r.head(),
        "reachable": r.is_reachable(),
        "offline": r.status() == ReplicaStatus::Offline,
        "valid": report.is_valid(),
        "check": report.to_string(),
    })
}

fn ids(list: &str, n: usize) -> Result<BTreeSet<usize>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(i) if i < n => Ok(i),
            _ => Err(format!("replica {s:?} is not in 0..{n}")),
        })
        .collect()
}

fn error(message: String) -> String {
    json!({ "error": message }).to_string()
}
