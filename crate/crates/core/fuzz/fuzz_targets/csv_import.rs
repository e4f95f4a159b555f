#![no_main]

use cypha_core::datastore::{read_csv, write_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_csv(data) {
        let mut out = Vec::new();
        write_csv(&mut out, &rows).unwrap();
        let _ = read_csv(out.as_slice()).unwrap();
    }
});
