//! Participant keys and pseudonyms.
//!
//! A participant is known on the ledger only by its [`Pseudonym`], the first
//! 20 bytes of SHA-256 over its Ed25519 public key. Real-world names live in
//! the off-ledger half of the [`Directory`] and must never reach encoded
//! ledger bytes; [`anonymity_audit`] checks that mechanically.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{put_bytes, Decode, DecodeError, Encode, Reader};
use crate::hash::{parse_fixed_hex, Hash256, ParseHexError};

pub const SEED_LEN: usize = 32;
pub const PSEUDONYM_LEN: usize = 20;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("seed must be {SEED_LEN} bytes, got {0}")]
    BadSeedLength(usize),
    #[error("refusing to sign an empty message")]
    EmptyMessage,
    #[error("pseudonym {0} is not registered")]
    UnknownPseudonym(Pseudonym),
}

/// Persistent ledger identifier of a participant.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pseudonym(pub [u8; PSEUDONYM_LEN]);

impl Pseudonym {
    pub fn from_public_key(key: &PublicKey) -> Self {
        let digest = Hash256::digest(&key.0);
        let mut out = [0u8; PSEUDONYM_LEN];
        out.copy_from_slice(&digest.0[..PSEUDONYM_LEN]);
        Pseudonym(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pseudonym({})", hex::encode(&self.0[..4]))
    }
}

impl FromStr for Pseudonym {
    type Err = ParseHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed_hex(s).map(Pseudonym)
    }
}

/// Raw Ed25519 public key bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn pseudonym(&self) -> Pseudonym {
        Pseudonym::from_public_key(self)
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_bytes(&self.0).ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..4]))
    }
}

impl FromStr for PublicKey {
    type Err = ParseHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed_hex(s).map(PublicKey)
    }
}

macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_serde!(Pseudonym);
hex_serde!(PublicKey);

/// A participant's keypair together with its derived pseudonym.
#[derive(Clone)]
pub struct NodeIdentity {
    signing: SigningKey,
    public_key: PublicKey,
    pseudonym: Pseudonym,
}

impl NodeIdentity {
    pub fn pseudonym(&self) -> Pseudonym {
        self.pseudonym
    }

    pub fn public_key(&self) -> PublicKey {
        self.public_key
    }

    /// The 32-byte seed this identity was derived from, for key files.
    pub fn seed(&self) -> [u8; SEED_LEN] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Result<Signature, IdentityError> {
        sign(self, message)
    }
}

impl PartialEq for NodeIdentity {
    fn eq(&self, other: &Self) -> bool {
        self.public_key == other.public_key
    }
}

impl Eq for NodeIdentity {}

impl fmt::Debug for NodeIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeIdentity")
            .field("pseudonym", &self.pseudonym)
            .finish_non_exhaustive()
    }
}

/// Derives an identity deterministically from 32 bytes of seed material.
pub fn keygen(seed: &[u8]) -> Result<NodeIdentity, IdentityError> {
    let seed: [u8; SEED_LEN] = seed
        .try_into()
        .map_err(|_| IdentityError::BadSeedLength(seed.len()))?;
    let signing = SigningKey::from_bytes(&seed);
    let public_key = PublicKey(signing.verifying_key().to_bytes());
    Ok(NodeIdentity {
        signing,
        pseudonym: public_key.pseudonym(),
        public_key,
    })
}

/// Derives a fixture identity from a label; handy for tests and scenarios.
pub fn keygen_from_label(label: &[u8]) -> NodeIdentity {
    keygen(&Hash256::digest(label).0).expect("digest is 32 bytes")
}

/// An Ed25519 signature together with the signer's pseudonym and public key.
///
/// Carrying the key makes signatures self-certifying: anyone can check that
/// the key hashes to the pseudonym and that the signature verifies, without
/// consulting a directory.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub signer: Pseudonym,
    pub public_key: PublicKey,
    #[serde(with = "hex::serde")]
    pub bytes: Vec<u8>,
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({:?}, {} bytes)", self.signer, self.bytes.len())
    }
}

impl Signature {
    /// Verifies under an explicitly supplied key.
    pub fn verify_with_key(&self, key: &PublicKey, message: &[u8]) -> bool {
        if key.pseudonym() != self.signer || *key != self.public_key {
            return false;
        }
        let Ok(raw) = <[u8; SIGNATURE_LEN]>::try_from(self.bytes.as_slice()) else {
            return false;
        };
        let Some(vk) = key.verifying_key() else {
            return false;
        };
        vk.verify_strict(message, &ed25519_dalek::Signature::from_bytes(&raw))
            .is_ok()
    }

    /// Verifies using the embedded key, which must hash to the signer pseudonym.
    pub fn verify_self_certified(&self, message: &[u8]) -> bool {
        self.verify_with_key(&self.public_key, message)
    }
}

impl Encode for Signature {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.signer.0);
        out.extend_from_slice(&self.public_key.0);
        put_bytes(out, &self.bytes);
    }
}

impl Decode for Signature {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Signature {
            signer: Pseudonym(r.array()?),
            public_key: PublicKey(r.array()?),
            bytes: r.bytes()?.to_vec(),
        })
    }
}

impl Encode for Pseudonym {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Pseudonym {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Pseudonym(r.array()?))
    }
}

pub fn sign(identity: &NodeIdentity, message: &[u8]) -> Result<Signature, IdentityError> {
    if message.is_empty() {
        return Err(IdentityError::EmptyMessage);
    }
    Ok(Signature {
        signer: identity.pseudonym,
        public_key: identity.public_key,
        bytes: identity.signing.sign(message).to_bytes().to_vec(),
    })
}

/// Pseudonym registry plus the off-ledger real-world labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Directory {
    keys: BTreeMap<Pseudonym, PublicKey>,
    labels: BTreeMap<Pseudonym, String>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: PublicKey) -> Pseudonym {
        let p = key.pseudonym();
        self.keys.insert(p, key);
        p
    }

    pub fn register_identity(&mut self, identity: &NodeIdentity) -> Pseudonym {
        self.register(identity.public_key())
    }

    /// Attaches an off-ledger real-world label. Labels are only ever held here.
    pub fn set_label(&mut self, pseudonym: Pseudonym, label: impl Into<String>) {
        self.labels.insert(pseudonym, label.into());
    }

    pub fn resolve(&self, pseudonym: &Pseudonym) -> Option<&PublicKey> {
        self.keys.get(pseudonym)
    }

    pub fn label(&self, pseudonym: &Pseudonym) -> Option<&str> {
        self.labels.get(pseudonym).map(String::as_str)
    }

    pub fn labels(&self) -> impl Iterator<Item = (&Pseudonym, &str)> {
        self.labels.iter().map(|(p, l)| (p, l.as_str()))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// The public half as a `pseudonym-hex -> public-key-hex` map.
    pub fn public_map(&self) -> BTreeMap<String, String> {
        self.keys
            .iter()
            .map(|(p, k)| (p.to_hex(), k.to_hex()))
            .collect()
    }

    pub fn label_map(&self) -> BTreeMap<String, String> {
        self.labels
            .iter()
            .map(|(p, l)| (p.to_hex(), l.clone()))
            .collect()
    }

    /// Rebuilds a directory from its public map. Entries whose key does not
    /// hash to the stated pseudonym are rejected.
    pub fn from_public_map(map: &BTreeMap<String, String>) -> Result<Self, DirectoryError> {
        let mut dir = Directory::new();
        for (p, k) in map {
            let pseudonym: Pseudonym = p.parse().map_err(|_| DirectoryError::Malformed(p.clone()))?;
            let key: PublicKey = k.parse().map_err(|_| DirectoryError::Malformed(k.clone()))?;
            if key.pseudonym() != pseudonym {
                return Err(DirectoryError::KeyMismatch(pseudonym));
            }
            dir.register(key);
        }
        Ok(dir)
    }

    pub fn with_labels(mut self, labels: &BTreeMap<String, String>) -> Result<Self, DirectoryError> {
        for (p, label) in labels {
            let pseudonym: Pseudonym = p.parse().map_err(|_| DirectoryError::Malformed(p.clone()))?;
            self.set_label(pseudonym, label.clone());
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectoryError {
    #[error("malformed directory entry {0:?}")]
    Malformed(String),
    #[error("public key does not hash to pseudonym {0}")]
    KeyMismatch(Pseudonym),
}

pub fn verify_signature(
    directory: &Directory,
    sig: &Signature,
    message: &[u8],
) -> Result<bool, IdentityError> {
    let key = directory
        .resolve(&sig.signer)
        .ok_or(IdentityError::UnknownPseudonym(sig.signer))?;
    Ok(sig.verify_with_key(key, message))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOccurrence {
    pub pseudonym: Pseudonym,
    pub label: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub labels_checked: usize,
    pub bytes_scanned: usize,
    pub occurrences: Vec<LabelOccurrence>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.occurrences.is_empty()
    }
}

/// Scans ledger bytes for every off-ledger label, reporting each occurrence.
pub fn anonymity_audit(chain_bytes: &[u8], directory: &Directory) -> AuditReport {
    let mut report = AuditReport {
        bytes_scanned: chain_bytes.len(),
        ..AuditReport::default()
    };
    for (pseudonym, label) in directory.labels() {
        let needle = label.as_bytes();
        // An empty label would match everywhere and carries no identity.
        if needle.is_empty() {
            continue;
        }
        report.labels_checked += 1;
        if needle.len() > chain_bytes.len() {
            continue;
        }
        for (offset, window) in chain_bytes.windows(needle.len()).enumerate() {
            if window == needle {
                report.occurrences.push(LabelOccurrence {
                    pseudonym: *pseudonym,
                    label: label.to_owned(),
                    offset,
                });
            }
        }
    }
    report.occurrences.sort_by_key(|o| o.offset);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(n: u8) -> NodeIdentity {
        keygen(&[n; 32]).unwrap()
    }

    #[test]
    fn keygen_is_deterministic_and_checks_length() {
        assert_eq!(id(1).pseudonym(), id(1).pseudonym());
        assert_ne!(id(1).pseudonym(), id(2).pseudonym());
        assert_eq!(keygen(&[0; 16]).unwrap_err(), IdentityError::BadSeedLength(16));
        assert_eq!(id(7).seed(), [7; 32]);
    }

    #[test]
    fn pseudonym_is_truncated_key_digest() {
        let ident = id(3);
        let digest = Hash256::digest(&ident.public_key().0);
        assert_eq!(ident.pseudonym().0, digest.0[..20]);
    }

    #[test]
    fn ten_thousand_seeds_have_no_pseudonym_collision() {
        let mut seen = std::collections::HashSet::new();
        for i in 0u32..10_000 {
            let mut seed = [0u8; 32];
            seed[..4].copy_from_slice(&i.to_be_bytes());
            assert!(seen.insert(keygen(&seed).unwrap().pseudonym()));
        }
    }

    #[test]
    fn sign_and_verify() {
        let a = id(1);
        let b = id(2);
        let mut dir = Directory::new();
        dir.register_identity(&a);
        dir.register_identity(&b);

        let sig = a.sign(b"hello").unwrap();
        assert!(verify_signature(&dir, &sig, b"hello").unwrap());
        assert!(sig.verify_self_certified(b"hello"));
        assert!(!sig.verify_with_key(&b.public_key(), b"hello"));

        // claiming to be b with a's signature
        let mut forged = sig.clone();
        forged.signer = b.pseudonym();
        assert!(!verify_signature(&dir, &forged, b"hello").unwrap());

        assert_eq!(a.sign(b"").unwrap_err(), IdentityError::EmptyMessage);
    }

    #[test]
    fn unknown_signer_and_truncated_signature() {
        let a = id(1);
        let dir = Directory::new();
        let sig = a.sign(b"m").unwrap();
        assert_eq!(
            verify_signature(&dir, &sig, b"m").unwrap_err(),
            IdentityError::UnknownPseudonym(a.pseudonym())
        );

        let mut dir = Directory::new();
        dir.register_identity(&a);
        let mut short = sig.clone();
        short.bytes.truncate(63);
        assert!(!verify_signature(&dir, &short, b"m").unwrap());
    }

    #[test]
    fn directory_public_map_round_trip() {
        let mut dir = Directory::new();
        for n in 0..5 {
            dir.register_identity(&id(n));
        }
        let back = Directory::from_public_map(&dir.public_map()).unwrap();
        assert_eq!(back, dir);

        let mut bad = dir.public_map();
        let first = bad.keys().next().unwrap().clone();
        bad.insert(first, id(99).public_key().to_hex());
        assert!(matches!(
            Directory::from_public_map(&bad),
            Err(DirectoryError::KeyMismatch(_))
        ));
    }

    #[test]
    fn audit_finds_spliced_label_offset() {
        let mut dir = Directory::new();
        let p = dir.register_identity(&id(1));
        dir.set_label(p, "ACME GmbH");

        let mut bytes = vec![0u8; 100];
        assert!(anonymity_audit(&bytes, &dir).passed());

        bytes.splice(37..37, b"ACME GmbH".iter().copied());
        let report = anonymity_audit(&bytes, &dir);
        assert!(!report.passed());
        assert_eq!(report.occurrences.len(), 1);
        assert_eq!(report.occurrences[0].offset, 37);
        assert_eq!(report.occurrences[0].pseudonym, p);
    }

    #[test]
    fn audit_with_no_labels_passes() {
        let report = anonymity_audit(b"anything at all", &Directory::new());
        assert!(report.passed());
        assert_eq!(report.labels_checked, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flipped_message_bit_never_verifies(
            msg in proptest::collection::vec(any::<u8>(), 1..256),
            bit in any::<usize>(),
        ) {
            let a = id(9);
            let sig = a.sign(&msg).unwrap();
            let mut tampered = msg.clone();
            let bit = bit % (tampered.len() * 8);
            tampered[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(!sig.verify_self_certified(&tampered));
        }

        #[test]
        fn flipped_signature_bit_never_verifies(
            msg in proptest::collection::vec(any::<u8>(), 1..64),
            bit in 0usize..(SIGNATURE_LEN * 8),
        ) {
            let a = id(5);
            let mut sig = a.sign(&msg).unwrap();
            sig.bytes[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(!sig.verify_self_certified(&msg));
        }
    }
}
