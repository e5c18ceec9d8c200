//! On-disk state under the data directory.
//!
//! ```text
//! <data_dir>/chain.pch       PCH1 chain file
//! <data_dir>/chain.head      32-byte trusted head
//! <data_dir>/directory.json  pseudonym-hex -> public-key-hex
//! <data_dir>/labels.json     pseudonym-hex -> real-world label (off-ledger)
//! <data_dir>/quorum.toml     replica_count, fault_bound, consent_fraction, mode
//! <data_dir>/.lock           advisory lock, exclusive while mutating
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use provchain::consensus::QuorumConfig;
use provchain::identity::{keygen, SEED_LEN};
use provchain::{Chain, Directory, Hash256, NodeIdentity};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const CHAIN_FILE: &str = "chain.pch";
pub const HEAD_FILE: &str = "chain.head";
pub const DIRECTORY_FILE: &str = "directory.json";
pub const LABELS_FILE: &str = "labels.json";
pub const QUORUM_FILE: &str = "quorum.toml";

pub struct Store {
    pub root: PathBuf,
    _lock: File,
}

impl Store {
    /// Opens the data directory, creating it when `exclusive` is set, and
    /// holds its lock until dropped.
    pub fn open(root: &Path, exclusive: bool) -> CliResult<Self> {
        if exclusive {
            fs::create_dir_all(root).map_err(|e| CliError::io("--data-dir", root, e))?;
        } else if !root.is_dir() {
            return Err(CliError::usage(format!(
                "--data-dir: {} does not exist",
                root.display()
            )));
        }
        let path = root.join(".lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| CliError::io("--data-dir", &path, e))?;
        let locked = if exclusive { lock.lock() } else { lock.lock_shared() };
        locked.map_err(|e| CliError::io("--data-dir", &path, e))?;
        Ok(Store {
            root: root.to_path_buf(),
            _lock: lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn directory(&self) -> CliResult<Directory> {
        let path = self.path(DIRECTORY_FILE);
        let dir = if path.exists() {
            read_directory(&path, "--data-dir")?
        } else {
            Directory::new()
        };
        let labels = self.path(LABELS_FILE);
        if labels.exists() {
            let map: BTreeMap<String, String> = read_json(&labels, "--data-dir")?;
            return dir
                .with_labels(&map)
                .map_err(|e| CliError::io("--data-dir", &labels, e));
        }
        Ok(dir)
    }

    pub fn save_directory(&self, dir: &Directory) -> CliResult<()> {
        write_json(&self.path(DIRECTORY_FILE), &dir.public_map())?;
        write_json(&self.path(LABELS_FILE), &dir.label_map())
    }

    /// The stored chain, or a fresh genesis chain when none exists yet.
    pub fn chain_or_genesis(&self) -> CliResult<Chain> {
        let path = self.path(CHAIN_FILE);
        if path.exists() {
            read_chain(&path, "--data-dir")
        } else {
            Ok(Chain::genesis(0))
        }
    }

    pub fn save_chain(&self, chain: &Chain) -> CliResult<()> {
        write_chain(&self.path(CHAIN_FILE), &self.path(HEAD_FILE), chain)
    }

    pub fn quorum(&self) -> CliResult<Option<QuorumConfig>> {
        let path = self.path(QUORUM_FILE);
        if path.exists() {
            read_quorum(&path, "--data-dir").map(Some)
        } else {
            Ok(None)
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, flag: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(flag, path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(flag, path, e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, to_json_pretty(value).as_bytes())
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| CliError::io("write", &tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| CliError::io("write", &tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io("write", path, e))
}

pub fn read_chain(path: &Path, flag: &str) -> CliResult<Chain> {
    let bytes = fs::read(path).map_err(|e| CliError::io(flag, path, e))?;
    Chain::from_file_bytes(&bytes).map_err(|e| CliError::rejected("Decode", e))
}

pub fn write_chain(chain_path: &Path, head_path: &Path, chain: &Chain) -> CliResult<()> {
    write_atomic(chain_path, &chain.to_file_bytes())?;
    write_atomic(head_path, &chain.head_hash().0)
}

/// A `.head` file holds the raw 32 bytes; a 64-digit hex string also works.
pub fn read_head(arg: &str) -> CliResult<Hash256> {
    if let Ok(h) = arg.parse::<Hash256>() {
        return Ok(h);
    }
    let path = Path::new(arg);
    let bytes = fs::read(path).map_err(|e| CliError::io("--head", path, e))?;
    if let Ok(raw) = <[u8; 32]>::try_from(bytes.as_slice()) {
        return Ok(Hash256(raw));
    }
    String::from_utf8(bytes)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::usage(format!("--head: {arg} is neither 32 bytes nor 64 hex digits")))
}

pub fn read_directory(path: &Path, flag: &str) -> CliResult<Directory> {
    let map: BTreeMap<String, String> = read_json(path, flag)?;
    Directory::from_public_map(&map).map_err(|e| CliError::io(flag, path, e))
}

pub fn read_quorum(path: &Path, flag: &str) -> CliResult<QuorumConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(flag, path, e))?;
    let config: QuorumConfig = toml::from_str(&text).map_err(|e| CliError::io(flag, path, e))?;
    config
        .validate()
        .map_err(|e| CliError::io(flag, path, e))?;
    Ok(config)
}

pub fn read_seed(path: &Path, flag: &str) -> CliResult<NodeIdentity> {
    let bytes = fs::read(path).map_err(|e| CliError::io(flag, path, e))?;
    keygen(&bytes).map_err(|e| CliError::io(flag, path, e))
}

/// Creates a seed file readable only by its owner.
pub fn write_seed(path: &Path, seed: &[u8; SEED_LEN], overwrite: bool) -> CliResult<()> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts
        .open(path)
        .map_err(|e| CliError::io("--seed-file", path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        f.set_permissions(fs::Permissions::from_mode(0o600))
            .map_err(|e| CliError::io("--seed-file", path, e))?;
    }
    f.write_all(seed)
        .map_err(|e| CliError::io("--seed-file", path, e))
}
