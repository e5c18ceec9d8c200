//! Provenance DAG over every unit a chain has ever produced.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Unit, UnitId};
use crate::hash::Hash256;
use crate::identity::Pseudonym;
use crate::ledger::Chain;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("InvalidChain: block {block}, transaction {tx}: {detail}")]
    InvalidChain {
        block: usize,
        tx: usize,
        detail: String,
    },
    #[error("UnknownUnit: {0}")]
    UnknownUnit(UnitId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub unit: Unit,
    /// Height of the block holding the producing transaction.
    pub height: u64,
    /// The transaction that consumed this unit, if any.
    pub consumed_by: Option<Hash256>,
    pub children: Vec<UnitId>,
    seq: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceGraph {
    vertices: BTreeMap<UnitId, Vertex>,
    edge_count: usize,
}

impl ProvenanceGraph {
    pub fn vertex(&self, id: &UnitId) -> Option<&Vertex> {
        self.vertices.get(id)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn unit_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Edges as `(parent, child)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (UnitId, UnitId)> + '_ {
        self.vertices
            .values()
            .flat_map(|v| v.unit.parents.iter().map(move |p| (*p, v.unit.id)))
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<UnitId>> {
        let mut indegree: BTreeMap<UnitId, usize> = self
            .vertices
            .iter()
            .map(|(id, v)| (*id, v.unit.parents.len()))
            .collect();
        let mut ready: VecDeque<UnitId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.vertices.len());
        while let Some(id) = ready.pop_front() {
            order.push(id);
            for child in &self.vertices[&id].children {
                let d = indegree.get_mut(child).expect("child is a vertex");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(*child);
                }
            }
        }
        (order.len() == self.vertices.len()).then_some(order)
    }

    fn sorted(&self, ids: impl IntoIterator<Item = UnitId>) -> Vec<&Vertex> {
        let mut out: Vec<&Vertex> = ids.into_iter().map(|id| &self.vertices[&id]).collect();
        out.sort_by_key(|v| (v.seq, v.unit.id.output_index));
        out
    }

    /// Graphviz rendering; `highlight` units are filled.
    pub fn to_dot(&self, highlight: &BTreeSet<UnitId>) -> String {
        let mut out = String::from("digraph provenance {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n");
        for v in self.sorted(self.vertices.keys().copied()) {
            let id = v.unit.id;
            let style = if highlight.contains(&id) {
                ", style=filled, fillcolor=\"#7fc97f\""
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "  \"{id}\" [label=\"{}\\n{:?}\\nowner {}\\nh={}\"{style}];",
                escape(&v.unit.kind),
                id,
                hex::encode(&v.unit.owner.0[..4]),
                v.height
            );
        }
        for (parent, child) in self.edges() {
            let _ = writeln!(out, "  \"{parent}\" -> \"{child}\";");
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Builds the provenance DAG by structurally replaying `chain`.
///
/// Signatures are not re-checked; verify the chain first.
pub fn build_provenance_graph(chain: &Chain) -> Result<ProvenanceGraph, GraphError> {
    let mut g = ProvenanceGraph::default();
    let mut seq = 0usize;
    for (block, b) in chain.blocks().iter().enumerate() {
        for (tx_index, tx) in b.transactions.iter().enumerate() {
            let invalid = |detail: String| GraphError::InvalidChain {
                block,
                tx: tx_index,
                detail,
            };
            let tx_id = tx.id();
            let inputs: BTreeSet<UnitId> = tx.inputs.iter().copied().collect();
            if inputs.len() != tx.inputs.len() {
                return Err(invalid("duplicate input".into()));
            }
            for input in &tx.inputs {
                match g.vertices.get_mut(input) {
                    None => return Err(invalid(format!("input {input} was never produced"))),
                    Some(v) if v.consumed_by.is_some() => {
                        return Err(invalid(format!("input {input} consumed twice")))
                    }
                    Some(v) => v.consumed_by = Some(tx_id),
                }
            }
            for (index, output) in tx.outputs.iter().enumerate() {
                let id = UnitId::new(tx_id, index as u64);
                if g.vertices.contains_key(&id) {
                    return Err(invalid(format!("unit {id} produced twice")));
                }
                if let Some(p) = output.parents.iter().find(|p| !inputs.contains(p)) {
                    return Err(invalid(format!("parent {p} is not an input")));
                }
                for p in &output.parents {
                    g.vertices.get_mut(p).expect("inputs exist").children.push(id);
                }
                g.edge_count += output.parents.len();
                g.vertices.insert(
                    id,
                    Vertex {
                        unit: Unit {
                            id,
                            kind: output.kind.clone(),
                            owner: tx.receiver,
                            parents: output.parents.clone(),
                        },
                        height: b.header.height,
                        consumed_by: None,
                        children: Vec::new(),
                        seq,
                    },
                );
            }
            seq += 1;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncestryEntry {
    pub unit: UnitId,
    pub kind: String,
    pub owner: Pseudonym,
    pub origin_tx: Hash256,
    pub height: u64,
    pub parents: Vec<UnitId>,
}

/// Ancestor closure of one unit (the unit itself included), ordered by
/// position in the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncestrySubgraph {
    pub target: UnitId,
    pub units: Vec<AncestryEntry>,
    /// Producing transactions, in chain order, without repeats.
    pub transactions: Vec<Hash256>,
}

impl AncestrySubgraph {
    pub fn unit_ids(&self) -> BTreeSet<UnitId> {
        self.units.iter().map(|e| e.unit).collect()
    }

    /// Minted origins of the target.
    pub fn roots(&self) -> impl Iterator<Item = &AncestryEntry> {
        self.units.iter().filter(|e| e.parents.is_empty())
    }

    pub fn includes_tx(&self, tx: &Hash256) -> bool {
        self.transactions.contains(tx)
    }
}

pub fn trace_back(graph: &ProvenanceGraph, unit: UnitId) -> Result<AncestrySubgraph, GraphError> {
    if !graph.vertices.contains_key(&unit) {
        return Err(GraphError::UnknownUnit(unit));
    }
    let mut seen = BTreeSet::from([unit]);
    let mut stack = vec![unit];
    while let Some(id) = stack.pop() {
        for p in &graph.vertices[&id].unit.parents {
            if seen.insert(*p) {
                stack.push(*p);
            }
        }
    }
    let units: Vec<AncestryEntry> = graph
        .sorted(seen)
        .into_iter()
        .map(|v| AncestryEntry {
            unit: v.unit.id,
            kind: v.unit.kind.clone(),
            owner: v.unit.owner,
            origin_tx: v.unit.id.origin_tx,
            height: v.height,
            parents: v.unit.parents.clone(),
        })
        .collect();
    let mut transactions: Vec<Hash256> = Vec::new();
    for e in &units {
        if transactions.last() != Some(&e.origin_tx) {
            transactions.push(e.origin_tx);
        }
    }
    Ok(AncestrySubgraph {
        target: unit,
        units,
        transactions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "tx", rename_all = "snake_case")]
pub enum UnitStatus {
    Live,
    ConsumedInto(Hash256),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub unit: UnitId,
    pub kind: String,
    /// Current holder for live units, last holder otherwise.
    pub owner: Pseudonym,
    pub height: u64,
    pub status: UnitStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallReport {
    pub tainted: Vec<UnitId>,
    /// Every unit with a tainted ancestor, tainted roots included.
    pub affected: Vec<RecallEntry>,
}

impl RecallReport {
    pub fn unit_ids(&self) -> BTreeSet<UnitId> {
        self.affected.iter().map(|e| e.unit).collect()
    }

    pub fn live(&self) -> impl Iterator<Item = &RecallEntry> {
        self.affected.iter().filter(|e| e.status == UnitStatus::Live)
    }

    pub fn consumed(&self) -> impl Iterator<Item = &RecallEntry> {
        self.affected.iter().filter(|e| e.status != UnitStatus::Live)
    }

    pub fn owners(&self) -> BTreeSet<Pseudonym> {
        self.affected.iter().map(|e| e.owner).collect()
    }
}

/// Descendant closure of the tainted units.
pub fn recall_set(graph: &ProvenanceGraph, tainted: &[UnitId]) -> Result<RecallReport, GraphError> {
    if let Some(missing) = tainted.iter().find(|t| !graph.vertices.contains_key(t)) {
        return Err(GraphError::UnknownUnit(*missing));
    }
    let mut seen: BTreeSet<UnitId> = tainted.iter().copied().collect();
    let mut queue: VecDeque<UnitId> = seen.iter().copied().collect();
    while let Some(id) = queue.pop_front() {
        for child in &graph.vertices[&id].children {
            if seen.insert(*child) {
                queue.push_back(*child);
            }
        }
    }
    let affected = graph
        .sorted(seen)
        .into_iter()
        .map(|v| RecallEntry {
            unit: v.unit.id,
            kind: v.unit.kind.clone(),
            owner: v.unit.owner,
            height: v.height,
            status: v.consumed_by.map_or(UnitStatus::Live, UnitStatus::ConsumedInto),
        })
        .collect();
    let mut tainted = tainted.to_vec();
    tainted.sort();
    tainted.dedup();
    Ok(RecallReport { tainted, affected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{keygen_from_label, Directory, NodeIdentity};
    use crate::ledger::Ledger;
    use crate::provenance::{OutputSpec, Transaction};

    fn setup() -> (Directory, NodeIdentity, NodeIdentity) {
        let a = keygen_from_label(b"a");
        let b = keygen_from_label(b"b");
        let mut dir = Directory::new();
        dir.register_identity(&a);
        dir.register_identity(&b);
        (dir, a, b)
    }

    #[test]
    fn single_mint_has_no_edges() {
        let (dir, a, _) = setup();
        let mut tx = Transaction::mint(a.pseudonym(), ["ore"], 1);
        tx.cosign(&a).unwrap();
        let id = tx.output_id(0);
        let l = Ledger::genesis(0).append(&dir, vec![tx], &[&a], 1).unwrap();
        let g = build_provenance_graph(l.chain()).unwrap();
        assert_eq!((g.unit_count(), g.edge_count()), (1, 0));

        let t = trace_back(&g, id).unwrap();
        assert_eq!(t.unit_ids(), BTreeSet::from([id]));
        let r = recall_set(&g, &[id]).unwrap();
        assert_eq!(r.unit_ids(), BTreeSet::from([id]));
        assert_eq!(r.live().count(), 1);
    }

    #[test]
    fn two_into_one_assembly() {
        let (dir, a, b) = setup();
        let mut mint = Transaction::mint(a.pseudonym(), ["x", "y"], 1);
        mint.cosign(&a).unwrap();
        let (u1, u2) = (mint.output_id(0), mint.output_id(1));
        let mut asm = Transaction::new(a.pseudonym(), b.pseudonym(), vec![u1, u2], vec![OutputSpec::new("xy", vec![u1, u2])], 2);
        asm.cosign(&a).unwrap();
        asm.cosign(&b).unwrap();
        let u3 = asm.output_id(0);
        let l = Ledger::genesis(0)
            .append(&dir, vec![mint], &[&a], 1)
            .unwrap()
            .append(&dir, vec![asm.clone()], &[&a, &b], 2)
            .unwrap();
        let g = build_provenance_graph(l.chain()).unwrap();
        assert_eq!((g.unit_count(), g.edge_count()), (3, 2));
        assert!(g.topological_order().is_some());

        let t = trace_back(&g, u3).unwrap();
        assert_eq!(t.units.len(), 3);
        assert_eq!(t.units.last().unwrap().unit, u3);
        assert_eq!(t.roots().count(), 2);
        assert_eq!(t.transactions, vec![u1.origin_tx, u3.origin_tx]);

        let r = recall_set(&g, &[u1]).unwrap();
        assert_eq!(r.unit_ids(), BTreeSet::from([u1, u3]));
        assert_eq!(r.consumed().next().unwrap().status, UnitStatus::ConsumedInto(asm.id()));
        assert_eq!(r.live().next().unwrap().owner, b.pseudonym());

        let dot = g.to_dot(&BTreeSet::from([u1]));
        assert_eq!(dot.matches("->").count(), 2);
        assert_eq!(dot.matches("filled").count(), 1);
    }

    #[test]
    fn unknown_units_are_errors() {
        let g = build_provenance_graph(&Chain::genesis(0)).unwrap();
        let ghost = UnitId::new(Hash256::digest(b"ghost"), 0);
        assert_eq!(trace_back(&g, ghost).unwrap_err(), GraphError::UnknownUnit(ghost));
        assert_eq!(recall_set(&g, &[ghost]).unwrap_err(), GraphError::UnknownUnit(ghost));
    }
}
