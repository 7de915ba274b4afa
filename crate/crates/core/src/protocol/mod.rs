//! Attribute-based pseudonym sets.
//!
//! A pseudonym is an attribute part (the hex digest of the owner's attribute
//! feature vectors), a random part of `r_l` symbols from an alphabet of `r_n`
//! symbols, and a 16-byte keyed tag binding both to the owner and an epoch.
//! The central authority (CA) mints whole sets; the local authority (LA)
//! checks them before distributing. Tags are HMAC-SHA256 truncated to 16
//! bytes, a symmetric stand-in for a pairing-based construction.

pub mod codec;

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use codec::{decode_set, decode_set_text, encode_set, encode_set_text, SET_MAGIC, SET_VERSION};

use crate::error::{Error, Result};
use crate::market::FollowerId;

type HmacSha256 = Hmac<Sha256>;

pub const DIGEST_LEN: usize = 32;
pub const TAG_LEN: usize = 16;
/// Random-part symbols, in order; an alphabet of size `r_n` uses the first `r_n`.
pub const SYMBOLS: &[u8] = b"123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

/// Secret shared by the CA and the LA.
#[derive(Clone, PartialEq, Eq)]
pub struct CaKey(Vec<u8>);

impl CaKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(Error::Protocol("CA key must not be empty".to_string()));
        }
        Ok(Self(bytes))
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes = hex::decode(text.trim()).map_err(|e| Error::Protocol(format!("CA key: {e}")))?;
        Self::new(bytes)
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.0).expect("HMAC accepts keys of any length")
    }
}

impl fmt::Debug for CaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CaKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeDigest(pub [u8; DIGEST_LEN]);

impl AttributeDigest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(text, &mut out).map_err(|e| Error::Decode(format!("attribute part: {e}")))?;
        Ok(Self(out))
    }
}

impl fmt::Display for AttributeDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeFingerprint {
    pub owner: FollowerId,
    pub digest: AttributeDigest,
    /// Data size in abstract units: total element count.
    pub size: u64,
}

/// Random-part alphabet size and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomPartSpec {
    pub r_n: u32,
    pub r_l: u32,
}

impl Default for RandomPartSpec {
    fn default() -> Self {
        Self { r_n: 9, r_l: 4 }
    }
}

impl RandomPartSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=SYMBOLS.len() as u32).contains(&self.r_n) {
            return Err(Error::Protocol(format!("r_n must be in 2..={}", SYMBOLS.len())));
        }
        if !(1..=u8::MAX as u32).contains(&self.r_l) {
            return Err(Error::Protocol("r_l must be in 1..=255".to_string()));
        }
        Ok(())
    }

    fn alphabet(&self) -> &'static [u8] {
        &SYMBOLS[..self.r_n as usize]
    }

    fn draw(&self, rng: &mut impl Rng) -> String {
        let alphabet = self.alphabet();
        (0..self.r_l)
            .map(|_| alphabet[rng.random_range(0..alphabet.len())] as char)
            .collect()
    }

    fn admits(&self, random_part: &str) -> bool {
        random_part.len() == self.r_l as usize && random_part.bytes().all(|b| self.alphabet().contains(&b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pseudonym {
    pub attribute_part: AttributeDigest,
    pub random_part: String,
    pub tag: [u8; TAG_LEN],
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.attribute_part, self.random_part, hex::encode(self.tag))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudonymSet {
    pub owner: FollowerId,
    pub epoch: u64,
    pub pseudonyms: Vec<Pseudonym>,
}

impl PseudonymSet {
    pub fn len(&self) -> usize {
        self.pseudonyms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudonyms.is_empty()
    }
}

/// Outcome of checking a set; empty `reasons` means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub reasons: Vec<String>,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        self.reasons.is_empty()
    }
}

/// Hashes the attribute feature vectors into a fixed-length commitment.
///
/// Serialization: vector count, then per vector its length followed by the
/// little-endian bits of each element, all counts as little-endian u64.
pub fn extract_attribute_fingerprint(owner: FollowerId, attribute_vectors: &[Vec<f64>]) -> Result<AttributeFingerprint> {
    if attribute_vectors.is_empty() || attribute_vectors.iter().all(Vec::is_empty) {
        return Err(Error::Protocol("attribute data is empty".to_string()));
    }
    let mut hasher = Sha256::new();
    hasher.update((attribute_vectors.len() as u64).to_le_bytes());
    let mut size = 0u64;
    for v in attribute_vectors {
        hasher.update((v.len() as u64).to_le_bytes());
        for x in v {
            hasher.update(x.to_le_bytes());
        }
        size += v.len() as u64;
    }
    Ok(AttributeFingerprint {
        owner,
        digest: AttributeDigest(hasher.finalize().into()),
        size,
    })
}

fn compute_tag(key: &CaKey, owner: FollowerId, attribute_part: &AttributeDigest, random_part: &str, epoch: u64) -> HmacSha256 {
    let mut mac = key.mac();
    mac.update(&owner.0.to_le_bytes());
    mac.update(attribute_part.to_hex().as_bytes());
    mac.update(&[random_part.len() as u8]);
    mac.update(random_part.as_bytes());
    mac.update(&epoch.to_le_bytes());
    mac
}

/// Mints `count` pseudonyms for the fingerprint's owner at `epoch`.
///
/// Deterministic in `(rng_seed, key, epoch, fingerprint)`.
pub fn mint_pseudonym_set(
    fingerprint: &AttributeFingerprint,
    count: usize,
    epoch: u64,
    key: &CaKey,
    spec: RandomPartSpec,
    rng_seed: u64,
) -> Result<PseudonymSet> {
    if count < 1 {
        return Err(Error::Protocol("a pseudonym set needs at least one pseudonym".to_string()));
    }
    if count > u32::MAX as usize {
        return Err(Error::Protocol("pseudonym count exceeds u32".to_string()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pseudonyms = (0..count)
        .map(|_| {
            let random_part = spec.draw(&mut rng);
            let tag = compute_tag(key, fingerprint.owner, &fingerprint.digest, &random_part, epoch).finalize().into_bytes();
            let mut truncated = [0u8; TAG_LEN];
            truncated.copy_from_slice(&tag[..TAG_LEN]);
            Pseudonym {
                attribute_part: fingerprint.digest,
                random_part,
                tag: truncated,
            }
        })
        .collect();
    Ok(PseudonymSet {
        owner: fingerprint.owner,
        epoch,
        pseudonyms,
    })
}

/// Checks every tag and the structural invariants of a set.
pub fn verify_pseudonym_set(set: &PseudonymSet, key: &CaKey, spec: RandomPartSpec) -> VerificationReport {
    let mut reasons = Vec::new();
    if set.pseudonyms.is_empty() {
        reasons.push("set is empty".to_string());
    }
    let shared = set.pseudonyms.first().map(|p| p.attribute_part);
    for (k, p) in set.pseudonyms.iter().enumerate() {
        if Some(p.attribute_part) != shared {
            reasons.push(format!("attribute part mismatch at index {k}"));
        }
        if !spec.admits(&p.random_part) {
            reasons.push(format!("malformed random part at index {k}"));
            continue;
        }
        let mac = compute_tag(key, set.owner, &p.attribute_part, &p.random_part, set.epoch);
        if mac.verify_truncated_left(&p.tag).is_err() {
            reasons.push(format!("tag mismatch at index {k}"));
        }
    }
    VerificationReport { reasons }
}

/// Per-owner minting seed: SHA-256 of `root ⊕ owner`, first eight bytes.
pub fn derive_owner_seed(root_seed: u64, owner: FollowerId) -> u64 {
    let digest = Sha256::digest((root_seed ^ u64::from(owner.0)).to_le_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Re-mints every set at `new_epoch` in one batch, preserving set sizes.
pub fn rotate_epoch(
    sets: &[PseudonymSet],
    new_epoch: u64,
    key: &CaKey,
    spec: RandomPartSpec,
    rng_seed: u64,
) -> Result<Vec<PseudonymSet>> {
    if let Some(stale) = sets.iter().find(|s| s.epoch >= new_epoch) {
        return Err(Error::Protocol(format!(
            "new epoch {new_epoch} does not exceed epoch {} of owner {}",
            stale.epoch, stale.owner
        )));
    }
    sets.iter()
        .map(|set| {
            let first = set
                .pseudonyms
                .first()
                .ok_or_else(|| Error::Protocol(format!("set of owner {} is empty", set.owner)))?;
            let fingerprint = AttributeFingerprint {
                owner: set.owner,
                digest: first.attribute_part,
                size: 0,
            };
            let seed = derive_owner_seed(rng_seed ^ new_epoch.rotate_left(32), set.owner);
            mint_pseudonym_set(&fingerprint, set.len(), new_epoch, key, spec, seed)
        })
        .collect()
}

/// Issues pseudonym sets from attribute fingerprints.
#[derive(Debug, Clone)]
pub struct CentralAuthority {
    key: CaKey,
    spec: RandomPartSpec,
    root_seed: u64,
}

/// A request forwarded by the LA: the owner's fingerprint and demand.
#[derive(Debug, Clone, PartialEq)]
pub struct MintRequest {
    pub fingerprint: AttributeFingerprint,
    pub count: usize,
    pub epoch: u64,
}

impl CentralAuthority {
    pub fn new(key: CaKey, spec: RandomPartSpec, root_seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self { key, spec, root_seed })
    }

    /// Identity audit always passes in simulation.
    pub fn handle(&self, request: &MintRequest) -> Result<PseudonymSet> {
        let seed = derive_owner_seed(self.root_seed ^ request.epoch.rotate_left(32), request.fingerprint.owner);
        mint_pseudonym_set(&request.fingerprint, request.count, request.epoch, &self.key, self.spec, seed)
    }
}

/// Checks sets returned by the CA before handing them to followers.
#[derive(Debug, Clone)]
pub struct LocalAuthority {
    key: CaKey,
    spec: RandomPartSpec,
}

impl LocalAuthority {
    pub fn new(key: CaKey, spec: RandomPartSpec) -> Self {
        Self { key, spec }
    }

    pub fn request(owner: FollowerId, attribute_vectors: &[Vec<f64>], count: usize, epoch: u64) -> Result<MintRequest> {
        Ok(MintRequest {
            fingerprint: extract_attribute_fingerprint(owner, attribute_vectors)?,
            count,
            epoch,
        })
    }

    pub fn accept(&self, request: &MintRequest, set: &PseudonymSet) -> VerificationReport {
        let mut report = verify_pseudonym_set(set, &self.key, self.spec);
        if set.owner != request.fingerprint.owner || set.epoch != request.epoch {
            report.reasons.push("set does not answer the request".to_string());
        }
        if set.len() != request.count {
            report.reasons.push(format!("expected {} pseudonyms, got {}", request.count, set.len()));
        }
        if set.pseudonyms.iter().any(|p| p.attribute_part != request.fingerprint.digest) {
            report.reasons.push("attribute part differs from the request".to_string());
        }
        report
    }
}
