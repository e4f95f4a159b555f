#![no_main]

use cypha_core::gateway::{open, Envelope, Gateway, KeyTable, Side};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let keys = KeyTable::derived(0);
    if let Ok(env) = Envelope::from_json(data) {
        let again = Envelope::from_json(&env.to_json()).unwrap();
        assert_eq!(again, env);
        let _ = env.verify(&keys);
    }
    let _ = open(&keys, "cypha/stage2/sensing", data);
    let _ = Gateway::new(keys).route(Side::Stage, "cypha/stage2/sensing", data);
});
