#![no_main]

use libfuzzer_sys::fuzz_target;
use pseudomarket::protocol::codec::{decode_set, encode_set};

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = decode_set(data) {
        // The format is canonical: a decoded set re-encodes to the input.
        assert_eq!(encode_set(&set), data);
    }
});
