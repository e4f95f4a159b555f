#![no_main]

use cypha_core::actuation::{ActuatorCommand, ManualRequest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cmd) = ActuatorCommand::from_json(data) {
        let back = ActuatorCommand::from_json(&cmd.to_json()).unwrap();
        assert_eq!((back.wp, back.ap, back.source), (cmd.wp, cmd.ap, cmd.source));
    }
    if let Ok(req) = ManualRequest::from_json(data) {
        let back = ManualRequest::from_json(&req.to_json()).unwrap();
        assert_eq!((back.wp, back.ap, back.release), (req.wp, req.ap, req.release));
    }
});
