#![no_main]

use cypha_core::controller::{classify, ControllerConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = ControllerConfig::from_toml_str(data) {
        assert!(cfg.validate().is_ok());
        let _ = classify(7.0, 4.0, &cfg);
        assert!(cfg.log_interval_ms() > 0);
    }
});
