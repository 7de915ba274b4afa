#![allow(dead_code)]

use pseudomarket::market::{Follower, FollowerId, ModelCache, SmuParams};
use pseudomarket::popa::{privacy_gain, PrivacyGainParams};
use rand::Rng;

/// Follower with per-follower λ ~ U(1, 2) and Hᵀ ~ U(1.3, 1.7); the rest at
/// scenario defaults.
pub fn random_follower(rng: &mut impl Rng, id: u32) -> Follower {
    let gain = privacy_gain(&PrivacyGainParams {
        lambda: rng.random_range(1.0..2.0),
        ..PrivacyGainParams::default()
    })
    .unwrap();
    let smu = SmuParams {
        id: FollowerId(id),
        popa: rng.random_range(1.3..1.7),
        gain,
        gamma: rng.random_range(1.5..2.0),
        mu: rng.random_range(20.0..40.0),
        tau: rng.random_range(0.02..0.06),
        regenerate: rng.random_bool(0.5),
        model_m: rng.random_range(0..3),
        model_n: rng.random_range(0..3),
        ..SmuParams::default()
    };
    let cached = rng.random_range(0..3);
    Follower::new(smu, ModelCache::new([cached], [cached]))
}

pub fn random_population(rng: &mut impl Rng, size: usize) -> Vec<Follower> {
    (0..size as u32).map(|i| random_follower(rng, i)).collect()
}

/// `n` identical followers with change frequency `lambda` and baseline `popa`.
pub fn homogeneous(n: u32, lambda: f64, popa: f64) -> Vec<Follower> {
    let gain = privacy_gain(&PrivacyGainParams {
        lambda,
        ..PrivacyGainParams::default()
    })
    .unwrap();
    (0..n)
        .map(|i| {
            Follower::new(
                SmuParams {
                    id: FollowerId(i),
                    popa,
                    gain,
                    ..SmuParams::default()
                },
                ModelCache::default(),
            )
        })
        .collect()
}

use pseudomarket::protocol::codec::{decode_set, encode_set};
use pseudomarket::protocol::{
    extract_attribute_fingerprint, mint_pseudonym_set, verify_pseudonym_set, CaKey, PseudonymSet, RandomPartSpec,
};

pub fn test_key() -> CaKey {
    CaKey::new(b"central authority test key".to_vec()).unwrap()
}

/// Mints a set with random owner, attributes, size (1..=64) and epoch.
pub fn random_set(rng: &mut impl Rng, key: &CaKey, spec: RandomPartSpec) -> PseudonymSet {
    let owner = FollowerId(rng.random());
    let vectors: Vec<Vec<f64>> = (0..rng.random_range(1..4))
        .map(|_| (0..rng.random_range(1..16)).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let fingerprint = extract_attribute_fingerprint(owner, &vectors).unwrap();
    let count = rng.random_range(1..=64);
    mint_pseudonym_set(&fingerprint, count, rng.random_range(0..1000), key, spec, rng.random()).unwrap()
}

/// True when the encoded set, with byte `pos` XORed by `mask`, either fails to
/// decode, fails verification, or decodes to a different set (never silently
/// accepted as the original).
pub fn tamper_detected(original: &PseudonymSet, pos: usize, mask: u8, key: &CaKey, spec: RandomPartSpec) -> bool {
    assert_ne!(mask, 0);
    let mut bytes = encode_set(original);
    bytes[pos] ^= mask;
    match decode_set(&bytes) {
        Err(_) => true,
        Ok(set) => !verify_pseudonym_set(&set, key, spec).is_valid(),
    }
}
