#![no_main]

use libfuzzer_sys::fuzz_target;
use pseudomarket::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = ExperimentConfig::parse(text) {
            // Anything accepted must pass validation and convert cleanly.
            config.validate().expect("parsed config validates");
            let _ = config.scenario();
            let _ = config.train_config();
        }
    }
});
