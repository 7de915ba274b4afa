#![no_main]

use libfuzzer_sys::fuzz_target;
use pseudomarket::scenario::{read_population_csv, Scenario};

fuzz_target!(|data: &[u8]| {
    let _ = read_population_csv(data, &Scenario::default());
});
