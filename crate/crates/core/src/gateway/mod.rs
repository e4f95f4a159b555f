//! Integrity-enforcing relay between the stage bus and the controller bus.

mod envelope;
mod keys;
mod router;

pub use envelope::{open, Envelope, IntegrityError, TAG_LEN};
pub use keys::{KeyError, KeyTable, KEY_LEN};
pub use router::{Gateway, GatewayNode, GatewayStats, RouteError, Routed, Side, GATEWAY_CLIENT_ID};
