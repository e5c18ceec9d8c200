mod error;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use provchain::consensus::QuorumConfig;
use provchain::identity::{anonymity_audit, SEED_LEN};
use provchain::ledger::chain_file_block_spans;
use provchain::provenance::{OutputSpec, ProvenanceGraph, UnitStatus};
use provchain::simnet::{counterfeit_scenario, figure2_fixture, run_scenario, Scenario, ScenarioReport};
use provchain::{
    build_provenance_graph, keygen, recall_set, trace_back, verify_chain, Chain, Directory, Hash256,
    Ledger, Pseudonym, Transaction, UnitId, VerificationReport,
};
use rand::RngCore;
use serde_json::{json, Value};

use error::{CliError, CliResult};
use store::Store;

#[derive(Parser)]
#[command(name = "provchain", version, about = "Tamper-evident supply-chain ledger")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// Directory holding the chain, head, directory and config files.
    #[arg(long, global = true, env = "PROVCHAIN_DATA_DIR", default_value = ".provchain")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a key pair and register its public half in the directory.
    Keygen {
        #[arg(long)]
        seed_file: PathBuf,
        /// Off-ledger real-world name for this party.
        #[arg(long)]
        label: Option<String>,
        /// Replace an existing seed file.
        #[arg(long)]
        force: bool,
    },
    /// Author and co-sign transactions.
    #[command(subcommand)]
    Tx(TxCommand),
    /// Commit co-signed transactions to the chain.
    #[command(subcommand)]
    Block(BlockCommand),
    /// Check a chain file against its trusted head.
    Verify(ChainArgs),
    /// Show the ancestry of one unit.
    Trace {
        unit: UnitId,
        #[command(flatten)]
        chain: ChainArgs,
        /// Emit a Graphviz graph with the ancestry highlighted.
        #[arg(long)]
        dot: bool,
    },
    /// List every unit descended from the tainted ones.
    Recall {
        units: Vec<UnitId>,
        #[arg(long = "unit", value_name = "UNIT")]
        unit_flags: Vec<UnitId>,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        dot: bool,
    },
    /// Search the chain bytes for any real-world label.
    Audit {
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Public directory (pseudonym -> public key).
        #[arg(long)]
        directory: Option<PathBuf>,
        /// Off-ledger labels (pseudonym -> name).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run a scenario against a simulated replica set.
    Simulate {
        scenario: Option<PathBuf>,
        #[arg(long, conflicts_with = "scenario")]
        builtin: Option<Builtin>,
        /// Overrides the scenario's own seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Quorum config; defaults to <data-dir>/quorum.toml for scenarios without one.
        #[arg(long)]
        quorum: Option<PathBuf>,
        /// Where to write chains, replica dumps and the report.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Summarise the data directory, or re-render a saved simulation report.
    Report {
        #[arg(long)]
        simulation: Option<PathBuf>,
    },
    /// Write the chain as JSON, one block per line.
    Export {
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TxCommand {
    /// Write an unsigned transaction file.
    New {
        /// Pseudonym, label or seed file of the sender.
        #[arg(long)]
        sender: String,
        /// Defaults to the sender, as for a mint.
        #[arg(long)]
        receiver: Option<String>,
        #[arg(long = "input", value_name = "UNIT")]
        inputs: Vec<UnitId>,
        /// KIND, or KIND=UNIT,UNIT to name the parents explicitly.
        #[arg(long = "output", value_name = "SPEC", required = true)]
        outputs: Vec<String>,
        #[arg(long)]
        height_hint: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add the signature of one counterparty to a transaction file.
    Cosign {
        file: PathBuf,
        #[arg(long)]
        seed_file: PathBuf,
        /// Write the signed transaction here instead of in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BlockCommand {
    /// Append one block holding the given transactions.
    Commit {
        #[arg(required = true)]
        transactions: Vec<PathBuf>,
        /// Seed file of each counterparty; all of them must sign the block.
        #[arg(long = "committer", value_name = "SEED_FILE", required = true)]
        committers: Vec<PathBuf>,
        /// Block timestamp in seconds; defaults to now.
        #[arg(long)]
        timestamp: Option<u64>,
    },
}

#[derive(Args)]
struct ChainArgs {
    /// Chain file; defaults to <data-dir>/chain.pch.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Trusted head: a 32-byte .head file or 64 hex digits. Defaults to the
    /// chain path with a .head extension.
    #[arg(long)]
    head: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Figure2,
    Counterfeit,
}

/// What a command prints. `ok == false` exits 1 after printing.
struct Output {
    text: String,
    json: Value,
    ok: bool,
}

impl Output {
    fn ok(text: impl Into<String>, json: Value) -> Self {
        Output {
            text: text.into(),
            json,
            ok: true,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            } else {
                print!("{}", out.text);
                if !out.text.is_empty() && !out.text.ends_with('\n') {
                    println!();
                }
            }
            ExitCode::from(if out.ok { 0 } else { 1 })
        }
        Err(e) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&e.to_json()).expect("json"));
            }
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<Output> {
    let data = cli.data_dir.as_path();
    match cli.command {
        Command::Keygen {
            seed_file,
            label,
            force,
        } => keygen_cmd(data, &seed_file, label, force),
        Command::Tx(TxCommand::New {
            sender,
            receiver,
            inputs,
            outputs,
            height_hint,
            out,
        }) => tx_new(data, &sender, receiver.as_deref(), inputs, &outputs, height_hint, &out),
        Command::Tx(TxCommand::Cosign { file, seed_file, out }) => tx_cosign(&file, &seed_file, out.as_deref()),
        Command::Block(BlockCommand::Commit {
            transactions,
            committers,
            timestamp,
        }) => block_commit(data, &transactions, &committers, timestamp),
        Command::Verify(args) => verify_cmd(data, &args),
        Command::Trace { unit, chain, dot } => trace_cmd(data, unit, &chain, dot),
        Command::Recall {
            mut units,
            unit_flags,
            chain,
            dot,
        } => {
            units.extend(unit_flags);
            if units.is_empty() {
                return Err(CliError::usage("--unit: at least one tainted unit is required"));
            }
            recall_cmd(data, &units, &chain, dot)
        }
        Command::Audit {
            chain,
            directory,
            labels,
        } => audit_cmd(data, chain, directory, labels),
        Command::Simulate {
            scenario,
            builtin,
            seed,
            quorum,
            out_dir,
        } => simulate_cmd(data, scenario, builtin, seed, quorum, out_dir),
        Command::Report { simulation } => report_cmd(data, simulation),
        Command::Export { chain, out } => export_cmd(data, chain, out),
    }
}

fn keygen_cmd(data: &Path, seed_file: &Path, label: Option<String>, force: bool) -> CliResult<Output> {
    let store = Store::open(data, true)?;
    let mut seed = [0u8; SEED_LEN];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    store::write_seed(seed_file, &seed, force)?;
    let id = keygen(&seed).expect("32-byte seed");
    let mut dir = store.directory()?;
    let pseudonym = dir.register_identity(&id);
    if let Some(label) = &label {
        dir.set_label(pseudonym, label.clone());
    }
    store.save_directory(&dir)?;
    Ok(Output::ok(
        format!("pseudonym {pseudonym}\npublic key {}\n", id.public_key().to_hex()),
        json!({
            "pseudonym": pseudonym,
            "public_key": id.public_key(),
            "seed_file": seed_file,
            "label": label,
        }),
    ))
}

/// Accepts a pseudonym, a label from the directory, or a seed file.
fn resolve_party(dir: &Directory, flag: &str, reference: &str) -> CliResult<Pseudonym> {
    if let Ok(p) = reference.parse::<Pseudonym>() {
        return Ok(p);
    }
    if let Some((p, _)) = dir.labels().find(|(_, l)| *l == reference) {
        return Ok(*p);
    }
    let path = Path::new(reference);
    if path.is_file() {
        return Ok(store::read_seed(path, flag)?.pseudonym());
    }
    Err(CliError::usage(format!(
        "{flag}: {reference:?} is not a pseudonym, known label or seed file"
    )))
}

fn parse_output(spec: &str, inputs: &[UnitId]) -> CliResult<OutputSpec> {
    let bad = |why: &str| CliError::usage(format!("--output: {spec:?}: {why}"));
    match spec.split_once('=') {
        None if spec.is_empty() => Err(bad("empty kind")),
        None => Ok(OutputSpec::new(spec, inputs.to_vec())),
        Some((kind, parents)) => {
            let parents = parents
                .split(',')
                .map(|p| p.trim().parse::<UnitId>().map_err(|_| bad("malformed parent unit")))
                .collect::<CliResult<Vec<_>>>()?;
            Ok(OutputSpec::new(kind, parents))
        }
    }
}

fn tx_new(
    data: &Path,
    sender: &str,
    receiver: Option<&str>,
    inputs: Vec<UnitId>,
    outputs: &[String],
    height_hint: Option<u64>,
    out: &Path,
) -> CliResult<Output> {
    let store = Store::open(data, false)?;
    let dir = store.directory()?;
    let sender = resolve_party(&dir, "--sender", sender)?;
    let receiver = match receiver {
        Some(r) => resolve_party(&dir, "--receiver", r)?,
        None => sender,
    };
    let outputs = outputs
        .iter()
        .map(|s| parse_output(s, &inputs))
        .collect::<CliResult<Vec<_>>>()?;
    let hint = match height_hint {
        Some(h) => h,
        None => store.chain_or_genesis()?.height() + 1,
    };
    let tx = Transaction::new(sender, receiver, inputs, outputs, hint);
    store::write_json(out, &tx)?;
    Ok(Output::ok(
        format!("wrote unsigned transaction to {}\n", out.display()),
        json!({ "file": out, "sender": sender, "receiver": receiver, "height_hint": hint }),
    ))
}

fn tx_cosign(file: &Path, seed_file: &Path, out: Option<&Path>) -> CliResult<Output> {
    let mut tx: Transaction = store::read_json(file, "FILE")?;
    let id = store::read_seed(seed_file, "--seed-file")?;
    tx.cosign(&id)
        .map_err(|e| CliError::rejected("NotCounterparty", e))?;
    let out = out.unwrap_or(file);
    store::write_json(out, &tx)?;
    let role = match (tx.sender == id.pseudonym(), tx.receiver == id.pseudonym()) {
        (true, true) => "sender and receiver",
        (true, false) => "sender",
        _ => "receiver",
    };
    let complete = tx.is_fully_signed();
    Ok(Output::ok(
        format!(
            "signed as {role}{}\ntransaction {}\n",
            if complete { "; fully signed" } else { "" },
            tx.id()
        ),
        json!({ "signer": id.pseudonym(), "role": role, "fully_signed": complete, "tx": tx.id() }),
    ))
}

/// Loads the data-dir chain, checks it against its head and replays it.
fn load_ledger(store: &Store, dir: &Directory) -> CliResult<Ledger> {
    let chain = store.chain_or_genesis()?;
    let head_path = store.path(store::HEAD_FILE);
    if head_path.exists() {
        let head = store::read_head(head_path.to_str().unwrap_or_default())?;
        let report = verify_chain(&chain, &head);
        if let VerificationReport::Invalid { check, .. } = &report {
            return Err(CliError::rejected(check.as_str(), report));
        }
    }
    Ledger::replay(chain, dir).map_err(|e| CliError::rejected(e.reason.code(), e))
}

fn block_commit(
    data: &Path,
    tx_files: &[PathBuf],
    committer_files: &[PathBuf],
    timestamp: Option<u64>,
) -> CliResult<Output> {
    let store = Store::open(data, true)?;
    let dir = store.directory()?;
    let txs = tx_files
        .iter()
        .map(|f| store::read_json::<Transaction>(f, "TRANSACTIONS"))
        .collect::<CliResult<Vec<_>>>()?;
    let committers = committer_files
        .iter()
        .map(|f| store::read_seed(f, "--committer"))
        .collect::<CliResult<Vec<_>>>()?;
    let refs: Vec<_> = committers.iter().collect();
    let ledger = load_ledger(&store, &dir)?;
    let ts = timestamp.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default()
    });
    let tx_ids: Vec<Hash256> = txs.iter().map(Transaction::id).collect();
    let next = ledger
        .append(&dir, txs, &refs, ts)
        .map_err(|e| CliError::rejected(e.code(), e))?;
    store.save_chain(next.chain())?;
    let head = next.chain().head_hash();
    let height = next.chain().height();
    let mut text = format!("committed block {height} ({head})\n");
    for id in &tx_ids {
        let _ = writeln!(text, "  tx {id}");
    }
    Ok(Output::ok(
        text,
        json!({ "height": height, "head": head, "transactions": tx_ids }),
    ))
}

fn chain_paths(data: &Path, args: &ChainArgs) -> (PathBuf, String) {
    let chain = args
        .chain
        .clone()
        .unwrap_or_else(|| data.join(store::CHAIN_FILE));
    let head = args
        .head
        .clone()
        .unwrap_or_else(|| chain.with_extension("head").to_string_lossy().into_owned());
    (chain, head)
}

fn verify_cmd(data: &Path, args: &ChainArgs) -> CliResult<Output> {
    let (chain_path, head_arg) = chain_paths(data, args);
    let bytes = fs::read(&chain_path).map_err(|e| CliError::io("--chain", &chain_path, e))?;
    let head = store::read_head(&head_arg)?;
    let report = provchain::ledger::verify_chain_bytes(&bytes, &head);
    let blocks = chain_file_block_spans(&bytes).map(|s| s.len()).ok();
    Ok(Output {
        text: format!("{report}\n"),
        json: json!({ "chain": chain_path, "head": head, "blocks": blocks, "result": report }),
        ok: report.is_valid(),
    })
}

/// A verified chain and its provenance graph.
fn verified_graph(data: &Path, args: &ChainArgs) -> CliResult<(Chain, ProvenanceGraph)> {
    let (chain_path, head_arg) = chain_paths(data, args);
    let chain = store::read_chain(&chain_path, "--chain")?;
    let head = store::read_head(&head_arg)?;
    let report = verify_chain(&chain, &head);
    if let VerificationReport::Invalid { check, .. } = &report {
        return Err(CliError::rejected(check.as_str(), report));
    }
    let graph = build_provenance_graph(&chain).map_err(|e| CliError::rejected("InvalidChain", e))?;
    Ok((chain, graph))
}

fn trace_cmd(data: &Path, unit: UnitId, args: &ChainArgs, dot: bool) -> CliResult<Output> {
    let (_, graph) = verified_graph(data, args)?;
    let ancestry = trace_back(&graph, unit).map_err(|e| CliError::rejected("UnknownUnit", e))?;
    let text = if dot {
        graph.to_dot(&ancestry.unit_ids())
    } else {
        let mut t = format!(
            "ancestry of {unit}: {} units, {} transactions\n",
            ancestry.units.len(),
            ancestry.transactions.len()
        );
        for e in &ancestry.units {
            let origin = if e.parents.is_empty() { "  minted" } else { "" };
            let _ = writeln!(t, "  h={:<4} {:?} {} owner {}{origin}", e.height, e.unit, e.kind, e.owner);
        }
        t
    };
    Ok(Output::ok(text, serde_json::to_value(&ancestry).expect("json")))
}

fn recall_cmd(data: &Path, units: &[UnitId], args: &ChainArgs, dot: bool) -> CliResult<Output> {
    let (_, graph) = verified_graph(data, args)?;
    let report = recall_set(&graph, units).map_err(|e| CliError::rejected("UnknownUnit", e))?;
    let text = if dot {
        graph.to_dot(&report.unit_ids())
    } else {
        let mut t = format!(
            "{} tainted, {} affected ({} still live)\n",
            report.tainted.len(),
            report.affected.len(),
            report.live().count()
        );
        for e in &report.affected {
            let status = match e.status {
                UnitStatus::Live => "live".to_string(),
                UnitStatus::ConsumedInto(tx) => format!("consumed by {}", tx.short()),
            };
            let _ = writeln!(t, "  h={:<4} {:?} {} owner {} {status}", e.height, e.unit, e.kind, e.owner);
        }
        t
    };
    Ok(Output::ok(text, serde_json::to_value(&report).expect("json")))
}

fn audit_cmd(
    data: &Path,
    chain: Option<PathBuf>,
    directory: Option<PathBuf>,
    labels: Option<PathBuf>,
) -> CliResult<Output> {
    let chain = chain.unwrap_or_else(|| data.join(store::CHAIN_FILE));
    let bytes = fs::read(&chain).map_err(|e| CliError::io("--chain", &chain, e))?;
    let dir_path = directory.unwrap_or_else(|| data.join(store::DIRECTORY_FILE));
    let mut dir = if dir_path.exists() {
        store::read_directory(&dir_path, "--directory")?
    } else {
        Directory::new()
    };
    let labels = labels.unwrap_or_else(|| dir_path.with_file_name(store::LABELS_FILE));
    if labels.exists() {
        let map: BTreeMap<String, String> = store::read_json(&labels, "--labels")?;
        dir = dir.with_labels(&map).map_err(|e| CliError::io("--labels", &labels, e))?;
    }
    let report = anonymity_audit(&bytes, &dir);
    let mut text = format!(
        "{}: {} labels checked over {} bytes\n",
        if report.passed() { "PASS" } else { "FAIL" },
        report.labels_checked,
        report.bytes_scanned
    );
    for o in &report.occurrences {
        let _ = writeln!(text, "  label of {} found at offset {}", o.pseudonym, o.offset);
    }
    Ok(Output {
        text,
        ok: report.passed(),
        json: serde_json::to_value(&report).expect("json"),
    })
}

fn load_scenario(data: &Path, path: &Path, quorum: Option<&QuorumConfig>) -> CliResult<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("SCENARIO", path, e))?;
    let mut scenario = Scenario::from_json(&text).map_err(|e| CliError::io("SCENARIO", path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::io("SCENARIO", path, e))?;
    let embedded = value.get("quorum").is_some();
    match quorum {
        Some(q) => scenario.quorum = q.clone(),
        None if !embedded => {
            if let Some(q) = Store::open(data, false).ok().map(|s| s.quorum()).transpose()?.flatten() {
                scenario.quorum = q;
            }
        }
        None => {}
    }
    Ok(scenario)
}

fn simulate_cmd(
    data: &Path,
    scenario: Option<PathBuf>,
    builtin: Option<Builtin>,
    seed: Option<u64>,
    quorum: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> CliResult<Output> {
    let quorum = quorum
        .map(|q| store::read_quorum(&q, "--quorum"))
        .transpose()?;
    let mut scenario = match (scenario, builtin) {
        (Some(path), _) => load_scenario(data, &path, quorum.as_ref())?,
        (None, Some(b)) => {
            let mut s = match b {
                Builtin::Figure2 => figure2_fixture(),
                Builtin::Counterfeit => counterfeit_scenario(),
            };
            if let Some(q) = quorum {
                s.quorum = q;
            }
            s
        }
        (None, None) => return Err(CliError::usage("SCENARIO: pass a scenario file or --builtin")),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let run = run_scenario(&scenario).map_err(|e| match e {
        provchain::simnet::SimError::MalformedScript { .. } => CliError::rejected("MalformedScript", e),
        other => CliError::usage(format!("--quorum: {other}")),
    })?;
    let report = &run.report;
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir.join("replicas")).map_err(|e| CliError::io("--out-dir", dir, e))?;
        store::write_chain(&dir.join(store::CHAIN_FILE), &dir.join(store::HEAD_FILE), &run.canonical)?;
        store::write_json(&dir.join(store::DIRECTORY_FILE), &run.directory.public_map())?;
        store::write_json(&dir.join(store::LABELS_FILE), &run.directory.label_map())?;
        store::write_json(&dir.join("report.json"), report)?;
        store::write_atomic(&dir.join("summary.txt"), report.summary().as_bytes())?;
        for (replica, record) in run.replicas.iter().zip(&report.replicas) {
            let stem = dir.join("replicas").join(format!("replica-{}", replica.id()));
            store::write_atomic(&stem.with_extension("pch"), replica.storage())?;
            store::write_atomic(&stem.with_extension("head"), &replica.head().0)?;
            store::write_json(&stem.with_extension("json"), record)?;
        }
    }
    Ok(Output {
        text: report.summary(),
        json: serde_json::to_value(report).expect("json"),
        ok: report.invariants_held(),
    })
}

fn report_cmd(data: &Path, simulation: Option<PathBuf>) -> CliResult<Output> {
    if let Some(path) = simulation {
        let report: ScenarioReport = store::read_json(&path, "--simulation")?;
        return Ok(Output {
            text: report.summary(),
            ok: report.invariants_held(),
            json: serde_json::to_value(&report).expect("json"),
        });
    }
    let store = Store::open(data, false)?;
    let dir = store.directory()?;
    let ledger = load_ledger(&store, &dir)?;
    let chain = ledger.chain();
    let mut holdings: BTreeMap<Pseudonym, BTreeMap<String, usize>> = BTreeMap::new();
    for u in ledger.state().units() {
        *holdings.entry(u.owner).or_default().entry(u.kind.clone()).or_default() += 1;
    }
    let quorum = store.quorum()?.unwrap_or_default();
    let mut text = format!(
        "chain: {} blocks, head {}, VALID\nparties registered: {}\nlive units: {}\nquorum: {} of {} replicas\n",
        chain.len(),
        chain.head_hash(),
        dir.len(),
        ledger.state().len(),
        quorum.quorum_size(),
        quorum.replica_count
    );
    for (owner, kinds) in &holdings {
        let name = dir.label(owner).map(|l| format!(" ({l})")).unwrap_or_default();
        let _ = writeln!(text, "  {owner}{name}: {kinds:?}");
    }
    let parties: BTreeSet<String> = holdings.keys().map(Pseudonym::to_hex).collect();
    Ok(Output::ok(
        text,
        json!({
            "blocks": chain.len(),
            "head": chain.head_hash(),
            "parties": dir.len(),
            "live_units": ledger.state().len(),
            "holdings": holdings.iter().map(|(p, k)| (p.to_hex(), k)).collect::<BTreeMap<_, _>>(),
            "holders": parties,
            "quorum": quorum,
        }),
    ))
}

fn export_cmd(data: &Path, chain: Option<PathBuf>, out: Option<PathBuf>) -> CliResult<Output> {
    let path = chain.unwrap_or_else(|| data.join(store::CHAIN_FILE));
    let chain = store::read_chain(&path, "--chain")?;
    let lines = chain.to_json_lines();
    match out {
        Some(out) => {
            store::write_atomic(&out, lines.as_bytes())?;
            Ok(Output::ok(
                format!("wrote {} blocks to {}\n", chain.len(), out.display()),
                json!({ "blocks": chain.len(), "file": out }),
            ))
        }
        None => {
            let blocks: Vec<Value> = lines
                .lines()
                .map(|l| serde_json::from_str(l).expect("own output"))
                .collect();
            Ok(Output::ok(lines, Value::Array(blocks)))
        }
    }
}
