use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Env {
    tmp: TempDir,
}

impl Env {
    fn new() -> Self {
        Env {
            tmp: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn data(&self) -> PathBuf {
        self.path("data")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_provchain"))
            .args(args)
            .env("PROVCHAIN_DATA_DIR", self.data())
            .current_dir(self.tmp.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let mut full = vec!["--json"];
        full.extend_from_slice(args);
        serde_json::from_str(&self.ok(&full)).unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two parties, one mint committed. Returns the minted unit id.
fn mint_world(env: &Env) -> String {
    env.ok(&["keygen", "--seed-file", "a.seed", "--label", "Acme Mills"]);
    env.ok(&["keygen", "--seed-file", "b.seed", "--label", "Baker Foods"]);
    env.ok(&["tx", "new", "--sender", "Acme Mills", "--output", "flour", "--output", "flour", "--out", "mint.json"]);
    let signed = env.json(&["tx", "cosign", "mint.json", "--seed-file", "a.seed"]);
    assert_eq!(signed["fully_signed"], true);
    let commit = env.json(&["block", "commit", "mint.json", "--committer", "a.seed", "--timestamp", "1"]);
    assert_eq!(commit["height"], 1);
    format!("{}:0", commit["transactions"][0].as_str().unwrap())
}

#[test]
fn author_cosign_commit_verify_round_trip() {
    let env = Env::new();
    let unit = mint_world(&env);
    env.ok(&[
        "tx", "new", "--sender", "Acme Mills", "--receiver", "Baker Foods", "--input", &unit, "--output", "flour",
        "--out", "sale.json",
    ]);
    let first = env.json(&["tx", "cosign", "sale.json", "--seed-file", "a.seed"]);
    assert_eq!(first["role"], "sender");
    assert_eq!(first["fully_signed"], false);
    let second = env.json(&["tx", "cosign", "sale.json", "--seed-file", "b.seed"]);
    assert_eq!(second["fully_signed"], true);
    env.ok(&["block", "commit", "sale.json", "--committer", "a.seed", "--committer", "b.seed", "--timestamp", "2"]);

    let out = env.ok(&["verify"]);
    assert_eq!(out.trim(), "VALID");
    let chain = env.data().join("chain.pch");
    let head = env.data().join("chain.head");
    assert_eq!(fs::read(&head).unwrap().len(), 32);
    assert_eq!(&fs::read(&chain).unwrap()[..4], b"PCH1");
    let out = env.ok(&["verify", "--chain", s(&chain), "--head", s(&head)]);
    assert_eq!(out.trim(), "VALID");

    let report = env.json(&["report"]);
    assert_eq!(report["blocks"], 3);
    assert_eq!(report["live_units"], 2);
    let trace = env.json(&["trace", &format!("{}:0", second["tx"].as_str().unwrap())]);
    assert_eq!(trace["units"].as_array().unwrap().len(), 2);
}

#[test]
fn one_missing_signature_is_rejected_with_its_code() {
    let env = Env::new();
    let unit = mint_world(&env);
    env.ok(&[
        "tx", "new", "--sender", "Acme Mills", "--receiver", "Baker Foods", "--input", &unit, "--output", "flour",
        "--out", "sale.json",
    ]);
    env.ok(&["tx", "cosign", "sale.json", "--seed-file", "a.seed"]);
    let out = env.run(&["--json", "block", "commit", "sale.json", "--committer", "a.seed", "--committer", "b.seed"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["code"], "BadReceiverSig");
}

#[test]
fn outsider_cannot_cosign() {
    let env = Env::new();
    let unit = mint_world(&env);
    env.ok(&["keygen", "--seed-file", "c.seed"]);
    env.ok(&[
        "tx", "new", "--sender", "Acme Mills", "--receiver", "Baker Foods", "--input", &unit, "--output", "flour",
        "--out", "sale.json",
    ]);
    let out = env.run(&["tx", "cosign", "sale.json", "--seed-file", "c.seed"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a counterparty"));
}

#[test]
fn tampered_chain_fails_verification() {
    let env = Env::new();
    mint_world(&env);
    let chain = env.data().join("chain.pch");
    let mut bytes = fs::read(&chain).unwrap();
    let last = bytes.len() - 70;
    bytes[last] ^= 1;
    fs::write(&chain, bytes).unwrap();
    let out = env.run(&["verify"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("INVALID at block 1"));
}

#[cfg(unix)]
#[test]
fn seed_files_are_private_and_not_overwritten() {
    use std::os::unix::fs::PermissionsExt;
    let env = Env::new();
    env.ok(&["keygen", "--seed-file", "a.seed"]);
    let meta = fs::metadata(env.path("a.seed")).unwrap();
    assert_eq!(meta.permissions().mode() & 0o777, 0o600);
    assert_eq!(meta.len(), 32);
    let again = env.run(&["keygen", "--seed-file", "a.seed"]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2_and_name_the_flag() {
    let env = Env::new();
    let out = env.run(&["verify", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    let out = env.run(&["verify", "--chain", "missing.pch"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--chain"));
}

#[test]
fn figure2_simulation_feeds_recall() {
    let env = Env::new();
    let out = env.path("fig2");
    let report = env.json(&["simulate", "--builtin", "figure2", "--out-dir", s(&out)]);
    assert!(report["violations"].as_array().unwrap().is_empty());
    let tainted: Vec<String> = report["recall"]["tainted"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_owned())
        .collect();
    assert_eq!(tainted.len(), 2);

    let chain = out.join("chain.pch");
    let mut args = vec!["recall", "--chain", s(&chain)];
    for t in &tainted {
        args.extend(["--unit", t.as_str()]);
    }
    let recall = env.json(&args);
    assert_eq!(recall["affected"].as_array().unwrap().len(), 4);

    let dot = env.ok(&["recall", "--chain", s(&chain), "--dot", &tainted[0]]);
    assert!(dot.starts_with("digraph provenance"));

    for r in 0..4 {
        let replica = out.join(format!("replicas/replica-{r}.pch"));
        let head = out.join(format!("replicas/replica-{r}.head"));
        assert_eq!(env.ok(&["verify", "--chain", s(&replica), "--head", s(&head)]).trim(), "VALID");
        let status: Value = serde_json::from_str(&fs::read_to_string(replica.with_extension("json")).unwrap()).unwrap();
        assert_eq!(status["status"], "honest");
    }
    let audit = env.json(&["audit", "--chain", s(&chain), "--directory", s(&out.join("directory.json"))]);
    assert_eq!(audit["labels_checked"], 4);
    assert!(audit["occurrences"].as_array().unwrap().is_empty());

    let text = env.ok(&["report", "--simulation", s(&out.join("report.json"))]);
    assert!(text.contains("invariants: all held"));
}

#[test]
fn seed_override_and_scenario_files() {
    let env = Env::new();
    let scenario = env.path("s.json");
    fs::write(
        &scenario,
        r#"[
            {"event": "mint", "node": "farm", "kind": "grain", "count": 2},
            {"event": "corrupt_replica", "replica": 2, "block_index": 1, "byte_offset": 5},
            {"event": "exchange", "sender": "farm", "receiver": "mill",
             "inputs": [{"event": 0, "output": 0}, {"event": 0, "output": 1}],
             "outputs": [{"kind": "flour"}]}
        ]"#,
    )
    .unwrap();
    fs::create_dir_all(env.data()).unwrap();
    fs::write(
        env.data().join("quorum.toml"),
        "replica_count = 7\nfault_bound = 2\nmode = \"bft\"\n",
    )
    .unwrap();
    let a = env.json(&["simulate", s(&scenario), "--seed", "11"]);
    let b = env.json(&["simulate", s(&scenario), "--seed", "11"]);
    let c = env.json(&["simulate", s(&scenario), "--seed", "12"]);
    assert_eq!(a, b);
    assert_ne!(a["canonical_head"], c["canonical_head"]);
    assert_eq!(a["seed"], 11);
    assert_eq!(a["quorum"]["replica_count"], 7);
    assert_eq!(a["detections"][0]["mechanism"], "hash_mismatch");

    fs::write(&scenario, r#"[{"event": "mark_tainted", "unit": {"event": 0, "output": 0}}]"#).unwrap();
    let out = env.run(&["--json", "simulate", s(&scenario)]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["code"], "MalformedScript");
}

#[test]
fn spliced_label_fails_the_audit() {
    let env = Env::new();
    mint_world(&env);
    let chain = env.data().join("chain.pch");
    let mut bytes = fs::read(&chain).unwrap();
    bytes.splice(20..20, b"Baker Foods".iter().copied());
    fs::write(env.path("leaky.pch"), bytes).unwrap();
    let out = env.run(&["--json", "audit", "--chain", "leaky.pch"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["occurrences"][0]["offset"], 20);
}

#[test]
fn export_writes_one_block_per_line() {
    let env = Env::new();
    mint_world(&env);
    let lines = env.ok(&["export"]);
    assert_eq!(lines.lines().count(), 2);
    let block: Value = serde_json::from_str(lines.lines().nth(1).unwrap()).unwrap();
    assert_eq!(block["header"]["height"], 1);
}
