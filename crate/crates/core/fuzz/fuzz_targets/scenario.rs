#![no_main]

use cypha_core::scenario::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(s) = Scenario::from_toml_str(data) {
        assert!(s.duration > 0.0);
        assert!(s.events.windows(2).all(|w| w[0].at <= w[1].at));
    }
});
