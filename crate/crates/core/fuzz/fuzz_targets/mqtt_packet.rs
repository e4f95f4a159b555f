#![no_main]

use cypha_core::bus::codec::Packet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(Some((packet, used))) = Packet::decode(data) {
        assert!(used <= data.len());
        // Anything we accept must re-encode to something we decode the same way.
        if let Ok(bytes) = packet.to_bytes() {
            let (again, n) = Packet::decode(&bytes).unwrap().unwrap();
            assert_eq!(n, bytes.len());
            assert_eq!(again, packet);
        }
    }
});
