mod common;

use std::collections::HashMap;

use common::{random_set, tamper_detected, test_key};
use proptest::prelude::*;
use pseudomarket::market::FollowerId;
use pseudomarket::protocol::codec::{decode_set, decode_set_text, encode_set, encode_set_text};
use pseudomarket::protocol::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_sets_roundtrip_and_verify() {
    let key = test_key();
    let spec = RandomPartSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let set = random_set(&mut rng, &key, spec);
        assert!(verify_pseudonym_set(&set, &key, spec).is_valid());
        assert_eq!(decode_set(&encode_set(&set)).unwrap(), set);
        assert_eq!(decode_set_text(&encode_set_text(&set)).unwrap(), set);
    }
}

#[test]
fn every_single_byte_tamper_is_rejected() {
    let key = test_key();
    let spec = RandomPartSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let set = random_set(&mut rng, &key, spec);
        let len = encode_set(&set).len();
        for pos in 0..len {
            let mask = rng.random_range(1..=255u8);
            assert!(tamper_detected(&set, pos, mask, &key, spec), "byte {pos} mask {mask:#x}");
        }
    }
}

#[test]
fn wrong_key_rejects() {
    let spec = RandomPartSpec::default();
    let set = random_set(&mut ChaCha8Rng::seed_from_u64(3), &test_key(), spec);
    let other = CaKey::new(b"another key".to_vec()).unwrap();
    let report = verify_pseudonym_set(&set, &other, spec);
    assert_eq!(report.reasons.len(), set.len());
}

#[test]
fn random_part_collisions_match_uniform_law() {
    let spec = RandomPartSpec::default();
    let key = test_key();
    let fingerprint = extract_attribute_fingerprint(FollowerId(0), &[vec![1.0]]).unwrap();
    let mut counts: HashMap<String, u64> = HashMap::new();
    for batch in 0..100u64 {
        let set = mint_pseudonym_set(&fingerprint, 1000, 0, &key, spec, batch).unwrap();
        for p in set.pseudonyms {
            *counts.entry(p.random_part).or_default() += 1;
        }
    }
    let n = 100_000f64;
    let pairs: f64 = counts.values().map(|&k| (k * (k - 1) / 2) as f64).sum();
    let p = 1.0 / 9f64.powi(4);
    let all_pairs = n * (n - 1.0) / 2.0;
    let expected = all_pairs * p;
    let sigma = (all_pairs * p * (1.0 - p)).sqrt();
    assert!((pairs - expected).abs() <= 3.0 * sigma, "{pairs} vs {expected} ± {sigma}");
}

#[test]
fn rotation_produces_fresh_valid_sets() {
    let key = test_key();
    let spec = RandomPartSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sets: Vec<PseudonymSet> = (0..10).map(|_| random_set(&mut rng, &key, spec)).collect();
    let max_epoch = sets.iter().map(|s| s.epoch).max().unwrap();
    let rotated = rotate_epoch(&sets, max_epoch + 1, &key, spec, 99).unwrap();
    for (old, new) in sets.iter().zip(&rotated) {
        assert_eq!(new.len(), old.len());
        assert_eq!(new.owner, old.owner);
        assert_eq!(new.epoch, max_epoch + 1);
        assert!(verify_pseudonym_set(new, &key, spec).is_valid());
        assert_ne!(new.pseudonyms[0].tag, old.pseudonyms[0].tag);
    }
    assert!(rotate_epoch(&sets, max_epoch, &key, spec, 99).is_err());
}

proptest! {
    #[test]
    fn text_tamper_never_verifies(seed in any::<u64>(), pick in any::<usize>(), replacement in prop::sample::select(b"0123456789abcdef".to_vec())) {
        let key = test_key();
        let spec = RandomPartSpec::default();
        let set = random_set(&mut ChaCha8Rng::seed_from_u64(seed), &key, spec);
        let mut text = encode_set_text(&set).into_bytes();
        // Only touch hex characters of pseudonym lines.
        let header_end = text.iter().position(|&b| b == b'\n').unwrap() + 1;
        let hex_positions: Vec<usize> = (header_end..text.len())
            .filter(|&i| text[i].is_ascii_hexdigit() && text[i].is_ascii_lowercase() || text[i].is_ascii_digit())
            .collect();
        let pos = hex_positions[pick % hex_positions.len()];
        prop_assume!(text[pos] != replacement);
        text[pos] = replacement;
        let text = String::from_utf8(text).unwrap();
        match decode_set_text(&text) {
            Err(_) => {}
            Ok(decoded) => prop_assert!(!verify_pseudonym_set(&decoded, &key, spec).is_valid()),
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic_decoder(data in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_set(&data);
    }
}
