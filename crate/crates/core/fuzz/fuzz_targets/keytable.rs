#![no_main]

use cypha_core::gateway::KeyTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(t) = KeyTable::from_toml_str(data) {
        let again = KeyTable::from_toml_str(&t.to_toml_string()).unwrap();
        assert_eq!(again.ids().collect::<Vec<_>>(), t.ids().collect::<Vec<_>>());
    }
});
