//! Random ledger histories and the reference oracles the tests compare
//! against. The oracles read parentage straight off the transactions and
//! never touch `ProvenanceGraph`.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use provchain::identity::keygen_from_label;
use provchain::provenance::OutputSpec;
use provchain::consensus::{QuorumConfig, ReplicaId};
use provchain::simnet::{OutputDecl, Participant, Scenario, ScenarioEvent, Typo, UnitRef};
use provchain::{
    apply_transaction, Chain, Directory, Ledger, NodeIdentity, Pseudonym, Transaction, UnitId,
    UnspentUnitSet,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct History {
    pub chain: Chain,
    pub directory: Directory,
    pub parties: Vec<NodeIdentity>,
    pub state: UnspentUnitSet,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub parties: usize,
    pub max_blocks: usize,
    pub max_units: usize,
    pub max_txs_per_block: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            parties: 5,
            max_blocks: 50,
            max_units: 200,
            max_txs_per_block: 3,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed-width company names, so no label is a substring of another.
pub fn company_label(i: usize) -> String {
    format!("Example Trading Company No. {i:04} Ltd")
}

pub fn parties(n: usize, salt: u64) -> (Vec<NodeIdentity>, Directory) {
    let mut dir = Directory::new();
    let ids: Vec<NodeIdentity> = (0..n)
        .map(|i| keygen_from_label(format!("party-{salt}-{i}").as_bytes()))
        .collect();
    for (i, id) in ids.iter().enumerate() {
        let p = dir.register_identity(id);
        dir.set_label(p, company_label(i));
    }
    (ids, dir)
}

fn random_tx(rng: &mut ChaCha8Rng, parties: &[NodeIdentity], state: &UnspentUnitSet, hint: u64) -> Transaction {
    let owners: Vec<Pseudonym> = {
        let set: BTreeSet<Pseudonym> = state.units().map(|u| u.owner).collect();
        set.into_iter().collect()
    };
    let by_pseudonym = |p: Pseudonym| parties.iter().find(|id| id.pseudonym() == p).unwrap();
    if owners.is_empty() || rng.gen_bool(0.25) {
        let owner = parties.choose(rng).unwrap();
        let n = rng.gen_range(1..=3);
        let kinds: Vec<String> = (0..n).map(|_| format!("raw-{}", rng.gen_range(0..4))).collect();
        let mut tx = Transaction::mint(owner.pseudonym(), kinds.iter().map(String::as_str), hint);
        tx.cosign(owner).unwrap();
        return tx;
    }
    let mut tx = {
        let sender = *owners.choose(rng).unwrap();
        let mine: Vec<UnitId> = state.owned_by(sender).map(|u| u.id).collect();
        let take = rng.gen_range(1..=mine.len().min(3));
        let inputs: Vec<UnitId> = mine.choose_multiple(rng, take).copied().collect();
        let outputs_n = rng.gen_range(1..=3);
        let mut parents: Vec<Vec<UnitId>> = (0..outputs_n)
            .map(|_| {
                let k = rng.gen_range(1..=inputs.len());
                let mut ps: Vec<UnitId> = inputs.choose_multiple(rng, k).copied().collect();
                ps.sort();
                ps
            })
            .collect();
        for input in &inputs {
            if !parents.iter().any(|ps| ps.contains(input)) {
                let slot = rng.gen_range(0..outputs_n);
                parents[slot].push(*input);
                parents[slot].sort();
            }
        }
        let outputs = parents
            .into_iter()
            .map(|ps| OutputSpec::new(format!("good-{}", rng.gen_range(0..4)), ps))
            .collect();
        let receiver = parties.choose(rng).unwrap().pseudonym();
        Transaction::new(sender, receiver, inputs, outputs, hint)
    };
    let (s, r) = (by_pseudonym(tx.sender), by_pseudonym(tx.receiver));
    tx.cosign(s).unwrap();
    tx.cosign(r).unwrap();
    tx
}

/// A valid chain built by random mints and exchanges among `shape.parties`.
pub fn random_history(seed: u64, shape: Shape) -> History {
    let mut rng = rng(seed);
    let (ids, directory) = parties(shape.parties, seed);
    let mut ledger = Ledger::genesis(0);
    let mut units = 0usize;
    let blocks = rng.gen_range(1..shape.max_blocks.max(2));
    for b in 1..=blocks {
        let mut state = ledger.state().clone();
        let mut txs = Vec::new();
        for _ in 0..rng.gen_range(1..=shape.max_txs_per_block) {
            let tx = random_tx(&mut rng, &ids, &state, ledger.chain().height() + 1);
            if units + tx.outputs.len() > shape.max_units {
                break;
            }
            if state.has_applied(&tx.id()) {
                continue;
            }
            units += tx.outputs.len();
            state = apply_transaction(&state, &tx);
            txs.push(tx);
        }
        if txs.is_empty() {
            break;
        }
        let involved: BTreeSet<Pseudonym> = txs.iter().flat_map(|t| [t.sender, t.receiver]).collect();
        let committers: Vec<&NodeIdentity> = ids.iter().filter(|i| involved.contains(&i.pseudonym())).collect();
        ledger = ledger
            .append(&directory, txs, &committers, b as u64)
            .expect("generated transactions are valid");
    }
    let (chain, state) = ledger.into_parts();
    History {
        chain,
        directory,
        parties: ids,
        state,
    }
}

/// Parent -> child adjacency read directly from transaction outputs.
pub struct Adjacency {
    pub units: BTreeSet<UnitId>,
    pub parents: BTreeMap<UnitId, Vec<UnitId>>,
    pub children: BTreeMap<UnitId, Vec<UnitId>>,
}

impl Adjacency {
    pub fn of(chain: &Chain) -> Self {
        let mut adj = Adjacency {
            units: BTreeSet::new(),
            parents: BTreeMap::new(),
            children: BTreeMap::new(),
        };
        for (_, tx) in chain.transactions() {
            let id = tx.id();
            for (i, out) in tx.outputs.iter().enumerate() {
                let unit = UnitId::new(id, i as u64);
                adj.units.insert(unit);
                adj.parents.insert(unit, out.parents.clone());
                for p in &out.parents {
                    adj.children.entry(*p).or_default().push(unit);
                }
            }
        }
        adj
    }

    /// Depth-first ancestor closure, `unit` included.
    pub fn ancestors(&self, unit: UnitId) -> BTreeSet<UnitId> {
        let mut out = BTreeSet::new();
        self.dfs(unit, &mut out);
        out
    }

    fn dfs(&self, unit: UnitId, out: &mut BTreeSet<UnitId>) {
        if out.insert(unit) {
            for p in &self.parents[&unit] {
                self.dfs(*p, out);
            }
        }
    }

    /// Breadth-first descendant closure, `tainted` included.
    pub fn descendants(&self, tainted: &[UnitId]) -> BTreeSet<UnitId> {
        let mut out: BTreeSet<UnitId> = tainted.iter().copied().collect();
        let mut queue: VecDeque<UnitId> = out.iter().copied().collect();
        while let Some(u) = queue.pop_front() {
            for c in self.children.get(&u).into_iter().flatten() {
                if out.insert(*c) {
                    queue.push_back(*c);
                }
            }
        }
        out
    }
}

/// Flips bit `bit` of the file image and returns it.
pub fn flip_bit(bytes: &[u8], bit: usize) -> Vec<u8> {
    let mut out = bytes.to_vec();
    out[bit / 8] ^= 1 << (bit % 8);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ScriptShape {
    pub events: usize,
    pub fault_bound: usize,
    /// Stop dropping replicas once this many are offline. Corruptions are
    /// only injected while fewer than `fault_bound` replicas are offline,
    /// since each one is repaired within its own round.
    pub max_drops: usize,
}

/// A random well-formed script. Exchanges always spend units their sender
/// holds at that point, so every non-fault event is expected to commit.
pub fn random_scenario(seed: u64, shape: ScriptShape) -> Scenario {
    let mut rng = rng(seed ^ 0x5eed);
    let roles: Vec<String> = (0..rng.gen_range(2..=5)).map(|i| format!("node{i}")).collect();
    let quorum = QuorumConfig::bft(shape.fault_bound);
    let mut live: BTreeMap<UnitRef, String> = BTreeMap::new();
    let mut produced: Vec<UnitRef> = Vec::new();
    let mut dropped: BTreeSet<ReplicaId> = BTreeSet::new();
    let mut script = Vec::new();
    let mut blocks = 1usize;
    for index in 0..shape.events {
        let roll = rng.gen_range(0..100);
        let event = if live.is_empty() || roll < 20 {
            let count = rng.gen_range(1..=3);
            let node = roles.choose(&mut rng).unwrap().clone();
            for o in 0..count {
                live.insert(UnitRef::new(index, o as u64), node.clone());
            }
            produced.extend((0..count).map(|o| UnitRef::new(index, o as u64)));
            blocks += 1;
            ScenarioEvent::Mint {
                node,
                kind: format!("raw-{}", rng.gen_range(0..3)),
                count,
            }
        } else if roll < 85 {
            let (sender, receiver, inputs, outputs) = random_exchange(&mut rng, &roles, &live);
            let mistyped = roll >= 70;
            if mistyped {
                let typo = match rng.gen_range(0..3) {
                    0 => Typo::Kind {
                        output: rng.gen_range(0..outputs.len()),
                        value: "mistyped".into(),
                    },
                    1 if roles.len() > 2 && sender != receiver => Typo::Receiver {
                        node: roles
                            .iter()
                            .find(|r| **r != receiver && **r != sender)
                            .unwrap()
                            .clone(),
                    },
                    1 => Typo::HeightHint { delta: 1 },
                    _ => Typo::HeightHint {
                        delta: rng.gen_range(1..10),
                    },
                };
                let after_signing = sender == receiver || rng.gen_bool(0.5);
                ScenarioEvent::InputError {
                    sender,
                    receiver,
                    inputs,
                    outputs,
                    typo,
                    after_signing,
                }
            } else {
                for i in &inputs {
                    live.remove(i);
                }
                for o in 0..outputs.len() {
                    live.insert(UnitRef::new(index, o as u64), receiver.clone());
                    produced.push(UnitRef::new(index, o as u64));
                }
                blocks += 1;
                ScenarioEvent::Exchange {
                    sender,
                    receiver,
                    inputs,
                    outputs,
                }
            }
        } else if roll < 97 {
            let fault = (0..quorum.replica_count as ReplicaId)
                .filter(|r| !dropped.contains(r))
                .collect::<Vec<_>>();
            let replica = *fault.choose(&mut rng).unwrap();
            if roll >= 93 && dropped.len() < shape.max_drops {
                dropped.insert(replica);
                ScenarioEvent::DropReplica { replica }
            } else if dropped.len() < shape.fault_bound {
                ScenarioEvent::CorruptReplica {
                    replica,
                    block_index: rng.gen_range(0..blocks),
                    byte_offset: rng.gen_range(0..4096),
                }
            } else {
                // one more fault would exceed the bound
                let node = roles.choose(&mut rng).unwrap().clone();
                live.insert(UnitRef::new(index, 0), node.clone());
                produced.push(UnitRef::new(index, 0));
                blocks += 1;
                ScenarioEvent::Mint {
                    node,
                    kind: "raw-0".into(),
                    count: 1,
                }
            }
        } else {
            ScenarioEvent::MarkTainted {
                unit: *produced.choose(&mut rng).unwrap(),
            }
        };
        script.push(event);
    }
    Scenario {
        seed,
        participants: roles
            .iter()
            .enumerate()
            .map(|(i, r)| Participant::new(r.clone(), Some(&company_label(i))))
            .collect(),
        script,
        quorum,
    }
}

fn random_exchange(
    rng: &mut ChaCha8Rng,
    roles: &[String],
    live: &BTreeMap<UnitRef, String>,
) -> (String, String, Vec<UnitRef>, Vec<OutputDecl>) {
    let holders: BTreeSet<&String> = live.values().collect();
    let sender = (*holders.iter().copied().collect::<Vec<_>>().choose(rng).unwrap()).clone();
    let mine: Vec<UnitRef> = live.iter().filter(|(_, o)| **o == sender).map(|(u, _)| *u).collect();
    let take = rng.gen_range(1..=mine.len().min(3));
    let inputs: Vec<UnitRef> = mine.choose_multiple(rng, take).copied().collect();
    let outputs_n = rng.gen_range(1..=2);
    let mut parents: Vec<Vec<UnitRef>> = (0..outputs_n)
        .map(|_| vec![*inputs.choose(rng).unwrap()])
        .collect();
    for i in &inputs {
        if !parents.iter().any(|ps| ps.contains(i)) {
            parents[rng.gen_range(0..outputs_n)].push(*i);
        }
    }
    let outputs = parents
        .into_iter()
        .map(|ps| {
            let mut ps = ps;
            ps.sort();
            ps.dedup();
            OutputDecl::new(format!("good-{}", rng.gen_range(0..3)), ps)
        })
        .collect();
    let receiver = roles.choose(rng).unwrap().clone();
    (sender, receiver, inputs, outputs)
}
