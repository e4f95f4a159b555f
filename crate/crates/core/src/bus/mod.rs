//! Topic-based publish/subscribe bus with an MQTT 3.1.1 subset on the wire.

mod broker;
pub mod codec;
mod loss;
pub mod tcp;
mod topic;

pub use broker::{
    Broker, BrokerConfig, BrokerStats, BusError, Delivery, PublishOutcome, Session, SessionHandle, MAX_INFLIGHT,
    MAX_PAYLOAD,
};
pub use codec::QoS;
pub use loss::LossModel;
pub use topic::{canonicalize, matches, Topic, TopicError, TopicFilter};
