use std::collections::{BTreeMap, HashMap};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex, MutexGuard};

use log::{debug, warn};

use super::codec::QoS;
use super::loss::LossModel;
use super::topic::{Topic, TopicError, TopicFilter};

/// Largest accepted PUBLISH payload.
pub const MAX_PAYLOAD: usize = 64 * 1024;

/// Unacknowledged QoS 1 deliveries kept per session before the oldest is discarded.
pub const MAX_INFLIGHT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("client id must not be empty")]
    EmptyClientId,
    #[error("session closed")]
    SessionClosed,
    #[error("broker unavailable")]
    Unavailable,
    #[error("payload of {0} bytes exceeds the 64 KiB limit")]
    PayloadTooLarge(usize),
    #[error(transparent)]
    Topic(#[from] TopicError),
}

/// A message handed to a subscriber.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub topic: Topic,
    pub payload: Arc<[u8]>,
    pub qos: QoS,
    /// Set for QoS 1 deliveries; echo it in a PUBACK.
    pub packet_id: Option<u16>,
    pub dup: bool,
    pub publisher: Arc<str>,
    /// Per-(publisher, topic) sequence number, starting at 1.
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PublishOutcome {
    /// QoS 1: the broker took responsibility for the message.
    Acked { seq: u64 },
    /// QoS 0: fire and forget.
    Sent { seq: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub connects: u64,
    pub published: u64,
    pub delivered: u64,
    pub lost: u64,
    pub retransmitted: u64,
    pub rejected_oversize: u64,
    pub taken_over: u64,
    pub keepalive_evictions: u64,
    pub inflight_overflow: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrokerConfig {
    /// QoS 1 retransmission interval, virtual seconds.
    pub retry_interval: f64,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self { retry_interval: 1.0 }
    }
}

struct Inflight {
    delivery: Delivery,
    last_sent: f64,
}

struct SessionEntry {
    token: u64,
    keep_alive: u16,
    last_seen: f64,
    filters: BTreeMap<TopicFilter, QoS>,
    tx: Sender<Delivery>,
    inflight: BTreeMap<u16, Inflight>,
    next_packet_id: u16,
}

impl SessionEntry {
    fn allocate_packet_id(&mut self) -> Option<u16> {
        for _ in 0..u16::MAX {
            let id = self.next_packet_id;
            self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
            if !self.inflight.contains_key(&id) {
                return Some(id);
            }
        }
        None
    }
}

struct State {
    cfg: BrokerConfig,
    sessions: BTreeMap<Arc<str>, SessionEntry>,
    seqs: HashMap<(Arc<str>, Topic), u64>,
    next_token: u64,
    now: f64,
    online: bool,
    loss: Option<LossModel>,
    stats: BrokerStats,
}

impl State {
    fn transmit(&mut self, client: &Arc<str>, delivery: Delivery) -> bool {
        if let Some(loss) = self.loss.as_mut() {
            if loss.drop_next() {
                self.stats.lost += 1;
                return false;
            }
        }
        let Some(entry) = self.sessions.get(client) else {
            return false;
        };
        if entry.tx.send(delivery).is_ok() {
            self.stats.delivered += 1;
            true
        } else {
            false
        }
    }

    fn entry(&mut self, client: &str, token: u64) -> Result<&mut SessionEntry, BusError> {
        if !self.online {
            return Err(BusError::Unavailable);
        }
        let now = self.now;
        match self.sessions.get_mut(client) {
            Some(e) if e.token == token => {
                e.last_seen = now;
                Ok(e)
            }
            _ => Err(BusError::SessionClosed),
        }
    }
}

/// Broker core shared by in-process sessions and the TCP front end.
///
/// Fan-out happens under one lock, so messages from one publisher reach
/// each subscriber in publish order.
#[derive(Clone)]
pub struct Broker {
    state: Arc<Mutex<State>>,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new(BrokerConfig::default())
    }
}

impl Broker {
    pub fn new(cfg: BrokerConfig) -> Self {
        Self {
            state: Arc::new(Mutex::new(State {
                cfg,
                sessions: BTreeMap::new(),
                seqs: HashMap::new(),
                next_token: 1,
                now: 0.0,
                online: true,
                loss: None,
                stats: BrokerStats::default(),
            })),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // A panic while holding the lock leaves only counters half-updated.
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Opens a session. An existing session with the same id is dropped.
    pub fn connect(&self, client_id: &str, keep_alive: u16) -> Result<Session, BusError> {
        if client_id.is_empty() {
            return Err(BusError::EmptyClientId);
        }
        let mut st = self.lock();
        if !st.online {
            return Err(BusError::Unavailable);
        }
        let (tx, rx) = mpsc::channel();
        let token = st.next_token;
        st.next_token += 1;
        let id: Arc<str> = Arc::from(client_id);
        let entry = SessionEntry {
            token,
            keep_alive,
            last_seen: st.now,
            filters: BTreeMap::new(),
            tx,
            inflight: BTreeMap::new(),
            next_packet_id: 1,
        };
        if st.sessions.insert(id.clone(), entry).is_some() {
            st.stats.taken_over += 1;
            debug!("session `{client_id}` taken over");
        }
        st.stats.connects += 1;
        Ok(Session { handle: SessionHandle { broker: self.clone(), client_id: id, token }, rx })
    }

    /// Advances virtual time: expires idle sessions and retransmits
    /// unacknowledged QoS 1 deliveries.
    pub fn tick(&self, now: f64) {
        let mut st = self.lock();
        st.now = now;
        if !st.online {
            return;
        }
        let expired: Vec<Arc<str>> = st
            .sessions
            .iter()
            .filter(|(_, e)| e.keep_alive > 0 && now - e.last_seen > 1.5 * f64::from(e.keep_alive))
            .map(|(id, _)| id.clone())
            .collect();
        for id in expired {
            warn!("session `{id}` missed its keep-alive, closing");
            st.sessions.remove(&id);
            st.stats.keepalive_evictions += 1;
        }
        let retry = st.cfg.retry_interval;
        let mut due = Vec::new();
        for (id, e) in st.sessions.iter_mut() {
            for inflight in e.inflight.values_mut() {
                if now - inflight.last_sent >= retry {
                    inflight.last_sent = now;
                    let mut d = inflight.delivery.clone();
                    d.dup = true;
                    due.push((id.clone(), d));
                }
            }
        }
        for (id, d) in due {
            st.stats.retransmitted += 1;
            st.transmit(&id, d);
        }
    }

    pub fn now(&self) -> f64 {
        self.lock().now
    }

    /// While offline every session operation fails with [`BusError::Unavailable`].
    pub fn set_online(&self, online: bool) {
        self.lock().online = online;
    }

    pub fn is_online(&self) -> bool {
        self.lock().online
    }

    pub fn set_loss(&self, loss: Option<LossModel>) {
        self.lock().loss = loss;
    }

    pub fn stats(&self) -> BrokerStats {
        self.lock().stats
    }

    pub fn session_count(&self) -> usize {
        self.lock().sessions.len()
    }

    pub fn is_connected(&self, client_id: &str) -> bool {
        self.lock().sessions.contains_key(client_id)
    }

    /// Total unacknowledged QoS 1 deliveries across sessions.
    pub fn inflight_count(&self) -> usize {
        self.lock().sessions.values().map(|e| e.inflight.len()).sum()
    }
}

/// The operation half of a session; the TCP front end pairs it with a
/// writer thread that drains the receiver.
#[derive(Clone)]
pub struct SessionHandle {
    broker: Broker,
    client_id: Arc<str>,
    token: u64,
}

impl SessionHandle {
    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    /// Adds a filter. Returns the granted QoS (QoS 2 requests are downgraded).
    pub fn subscribe(&self, filter: &str, requested: QoS) -> Result<QoS, BusError> {
        let filter = TopicFilter::new(filter)?;
        let mut st = self.broker.lock();
        let e = st.entry(&self.client_id, self.token)?;
        e.filters.insert(filter, requested);
        Ok(requested)
    }

    pub fn publish(&self, topic: &str, payload: impl Into<Arc<[u8]>>, qos: QoS) -> Result<PublishOutcome, BusError> {
        let payload: Arc<[u8]> = payload.into();
        let topic = Topic::new(topic)?;
        let mut st = self.broker.lock();
        st.entry(&self.client_id, self.token)?;
        if payload.len() > MAX_PAYLOAD {
            st.stats.rejected_oversize += 1;
            return Err(BusError::PayloadTooLarge(payload.len()));
        }
        st.stats.published += 1;
        let seq = {
            let s = st.seqs.entry((self.client_id.clone(), topic.clone())).or_insert(0);
            *s += 1;
            *s
        };
        let now = st.now;
        let mut out = Vec::new();
        for (id, e) in st.sessions.iter_mut() {
            let Some(sub_qos) = e.filters.iter().filter(|(f, _)| f.matches(&topic)).map(|(_, q)| *q).max()
            else {
                continue;
            };
            let qos = qos.min(sub_qos);
            let mut d = Delivery {
                topic: topic.clone(),
                payload: payload.clone(),
                qos,
                packet_id: None,
                dup: false,
                publisher: self.client_id.clone(),
                seq,
            };
            if qos == QoS::AtLeastOnce {
                if e.inflight.len() >= MAX_INFLIGHT {
                    let oldest = *e.inflight.keys().next().expect("non-empty");
                    e.inflight.remove(&oldest);
                    out.push((None, d.clone()));
                }
                match e.allocate_packet_id() {
                    Some(pid) => {
                        d.packet_id = Some(pid);
                        e.inflight.insert(pid, Inflight { delivery: d.clone(), last_sent: now });
                    }
                    None => continue,
                }
            }
            out.push((Some(id.clone()), d));
        }
        for (target, d) in out {
            match target {
                Some(id) => {
                    st.transmit(&id, d);
                }
                None => st.stats.inflight_overflow += 1,
            }
        }
        Ok(match qos {
            QoS::AtLeastOnce => PublishOutcome::Acked { seq },
            QoS::AtMostOnce => PublishOutcome::Sent { seq },
        })
    }

    /// Acknowledges a QoS 1 delivery.
    pub fn puback(&self, packet_id: u16) -> Result<(), BusError> {
        let mut st = self.broker.lock();
        let e = st.entry(&self.client_id, self.token)?;
        e.inflight.remove(&packet_id);
        Ok(())
    }

    pub fn ping(&self) -> Result<(), BusError> {
        let mut st = self.broker.lock();
        st.entry(&self.client_id, self.token).map(|_| ())
    }

    pub fn is_connected(&self) -> bool {
        let st = self.broker.lock();
        st.sessions.get(&*self.client_id).is_some_and(|e| e.token == self.token)
    }

    /// Ends the session if it is still the live one for this client id.
    pub fn disconnect(&self) {
        let mut st = self.broker.lock();
        if st.sessions.get(&*self.client_id).is_some_and(|e| e.token == self.token) {
            st.sessions.remove(&*self.client_id);
        }
    }
}

/// An in-process client session. Movable between threads, not shareable.
pub struct Session {
    handle: SessionHandle,
    rx: Receiver<Delivery>,
}

impl Session {
    pub fn client_id(&self) -> &str {
        self.handle.client_id()
    }

    pub fn handle(&self) -> &SessionHandle {
        &self.handle
    }

    pub fn into_parts(self) -> (SessionHandle, Receiver<Delivery>) {
        (self.handle, self.rx)
    }

    pub fn subscribe(&self, filter: &str, qos: QoS) -> Result<QoS, BusError> {
        self.handle.subscribe(filter, qos)
    }

    pub fn publish(&self, topic: &str, payload: impl Into<Arc<[u8]>>, qos: QoS) -> Result<PublishOutcome, BusError> {
        self.handle.publish(topic, payload, qos)
    }

    /// Takes the next delivery, acknowledging it if it is QoS 1.
    ///
    /// Returns `Err(SessionClosed)` once the session has been dropped by the
    /// broker and its queue is empty.
    pub fn poll(&mut self) -> Result<Option<Delivery>, BusError> {
        match self.rx.try_recv() {
            Ok(d) => {
                if let Some(pid) = d.packet_id {
                    // A failed ack leaves the delivery in flight; it will come again.
                    let _ = self.handle.puback(pid);
                }
                Ok(Some(d))
            }
            Err(TryRecvError::Empty) => {
                if self.handle.is_connected() {
                    let _ = self.handle.ping();
                    Ok(None)
                } else {
                    Err(BusError::SessionClosed)
                }
            }
            Err(TryRecvError::Disconnected) => Err(BusError::SessionClosed),
        }
    }

    /// Everything currently queued, in order.
    pub fn drain(&mut self) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Ok(Some(d)) = self.poll() {
            out.push(d);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.handle.is_connected()
    }

    pub fn disconnect(self) {
        self.handle.disconnect();
    }
}
