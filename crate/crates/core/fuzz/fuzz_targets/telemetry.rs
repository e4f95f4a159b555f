#![no_main]

use cypha_core::controller::parse_telemetry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rec) = parse_telemetry(data) {
        assert!(rec.out_of_range().is_none());
        assert_eq!(parse_telemetry(&rec.to_json()).map(|r| r.stage).ok(), Some(rec.stage));
    }
});
