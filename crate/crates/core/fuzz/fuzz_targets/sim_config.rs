#![no_main]

use cypha_core::plant::{SimConfig, World};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = SimConfig::from_toml_str(data) {
        let tanks = World::default_tanks(&cfg);
        if let Ok(mut w) = World::new(cfg, tanks) {
            let dt = w.config().dt;
            for _ in 0..4 {
                let _ = w.step(dt);
            }
        }
    }
});
