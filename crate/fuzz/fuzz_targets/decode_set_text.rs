#![no_main]

use libfuzzer_sys::fuzz_target;
use pseudomarket::protocol::codec::{decode_set_text, encode_set_text};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(set) = decode_set_text(text) {
            let again = decode_set_text(&encode_set_text(&set)).expect("re-encoded set decodes");
            assert_eq!(again, set);
        }
    }
});
