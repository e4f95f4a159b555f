//! Blocking TCP front end for [`Broker`], one reader and one writer thread
//! per connection.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};

use super::broker::{Broker, BusError, Delivery, SessionHandle};
use super::codec::{CodecError, ConnectReturnCode, Packet, Publish, QoS, SubAck, SUBACK_FAILURE};

#[derive(Debug, thiserror::Error)]
pub enum TcpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("connection refused: {0:?}")]
    Refused(ConnectReturnCode),
    #[error("unexpected packet {0:?}")]
    Unexpected(Box<Packet>),
    #[error("connection closed")]
    Closed,
}

/// Reads whole packets from a stream.
struct PacketReader {
    stream: TcpStream,
    buf: Vec<u8>,
}

impl PacketReader {
    fn new(stream: TcpStream) -> Self {
        Self { stream, buf: Vec::with_capacity(4096) }
    }

    fn next(&mut self) -> Result<Packet, TcpError> {
        loop {
            if let Some((packet, used)) = Packet::decode(&self.buf)? {
                self.buf.drain(..used);
                return Ok(packet);
            }
            let mut chunk = [0u8; 4096];
            let n = self.stream.read(&mut chunk)?;
            if n == 0 {
                return Err(TcpError::Closed);
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}

fn send(stream: &Mutex<TcpStream>, packet: &Packet) -> Result<(), TcpError> {
    let bytes = packet.to_bytes()?;
    let mut s = stream.lock().unwrap_or_else(|p| p.into_inner());
    s.write_all(&bytes)?;
    Ok(())
}

/// A listening broker. Dropping it stops accepting; live connections
/// finish on their own.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn bind(addr: impl ToSocketAddrs, broker: Broker) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let accept = thread::Builder::new().name("mqtt-accept".into()).spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let broker = broker.clone();
                        let _ = thread::Builder::new()
                            .name("mqtt-conn".into())
                            .spawn(move || serve_connection(stream, broker));
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        })?;
        info!("broker listening on {addr}");
        Ok(Self { addr, stop, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve_connection(stream: TcpStream, broker: Broker) {
    let peer = stream.peer_addr().ok();
    if let Err(e) = run_connection(stream, broker) {
        debug!("connection {peer:?} ended: {e}");
    }
}

fn run_connection(stream: TcpStream, broker: Broker) -> Result<(), TcpError> {
    stream.set_nodelay(true)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    let mut reader = PacketReader::new(stream.try_clone()?);
    let connect = match reader.next()? {
        Packet::Connect(c) => c,
        other => return Err(TcpError::Unexpected(Box::new(other))),
    };
    let session = match broker.connect(&connect.client_id, connect.keep_alive) {
        Ok(s) => s,
        Err(e) => {
            let code = match e {
                BusError::EmptyClientId => ConnectReturnCode::IdentifierRejected,
                _ => ConnectReturnCode::ServerUnavailable,
            };
            send(&writer, &Packet::ConnAck { session_present: false, code })?;
            return Ok(());
        }
    };
    send(&writer, &Packet::ConnAck { session_present: false, code: ConnectReturnCode::Accepted })?;
    let (handle, rx) = session.into_parts();
    let out = writer.clone();
    let close_on_exit = stream.try_clone()?;
    let writer_thread = thread::Builder::new().name("mqtt-write".into()).spawn(move || {
        forward_deliveries(rx, &out);
        let _ = close_on_exit.shutdown(Shutdown::Both);
    })?;
    let result = read_loop(&mut reader, &handle, &writer);
    handle.disconnect();
    let _ = stream.shutdown(Shutdown::Both);
    let _ = writer_thread.join();
    result
}

fn forward_deliveries(rx: Receiver<Delivery>, out: &Mutex<TcpStream>) {
    while let Ok(d) = rx.recv() {
        let packet = Packet::Publish(Publish {
            dup: d.dup,
            qos: d.qos,
            retain: false,
            topic: d.topic.as_str().to_owned(),
            packet_id: d.packet_id,
            payload: d.payload.to_vec(),
        });
        if send(out, &packet).is_err() {
            break;
        }
    }
}

fn read_loop(reader: &mut PacketReader, handle: &SessionHandle, writer: &Mutex<TcpStream>) -> Result<(), TcpError> {
    loop {
        match reader.next()? {
            Packet::Publish(p) => {
                match handle.publish(&p.topic, p.payload, p.qos) {
                    Ok(_) => {}
                    Err(BusError::PayloadTooLarge(n)) => {
                        warn!("{}: payload of {n} bytes, closing", handle.client_id());
                        return Ok(());
                    }
                    Err(BusError::Topic(e)) => {
                        warn!("{}: bad topic: {e}, closing", handle.client_id());
                        return Ok(());
                    }
                    Err(e) => return Err(io::Error::other(e).into()),
                }
                if let Some(packet_id) = p.packet_id {
                    send(writer, &Packet::PubAck { packet_id })?;
                }
            }
            Packet::PubAck { packet_id } => {
                let _ = handle.puback(packet_id);
            }
            Packet::Subscribe(sub) => {
                let return_codes = sub
                    .filters
                    .iter()
                    .map(|(f, q)| {
                        let requested = QoS::from_u8(*q).unwrap_or(QoS::AtLeastOnce);
                        match handle.subscribe(f, requested) {
                            Ok(granted) => granted as u8,
                            Err(_) => SUBACK_FAILURE,
                        }
                    })
                    .collect();
                send(writer, &Packet::SubAck(SubAck { packet_id: sub.packet_id, return_codes }))?;
            }
            Packet::PingReq => {
                let _ = handle.ping();
                send(writer, &Packet::PingResp)?;
            }
            Packet::Disconnect => return Ok(()),
            other => return Err(TcpError::Unexpected(Box::new(other))),
        }
        if !handle.is_connected() {
            return Ok(());
        }
    }
}

/// Minimal blocking client, enough for tools and tests.
pub struct TcpClient {
    reader: PacketReader,
    writer: Mutex<TcpStream>,
    next_id: u16,
    pending: Vec<Publish>,
}

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs, client_id: &str, keep_alive: u16) -> Result<Self, TcpError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut client = Self {
            reader: PacketReader::new(stream.try_clone()?),
            writer: Mutex::new(stream),
            next_id: 1,
            pending: Vec::new(),
        };
        client.send(&Packet::Connect(super::codec::Connect::new(client_id, keep_alive)))?;
        match client.reader.next()? {
            Packet::ConnAck { code: ConnectReturnCode::Accepted, .. } => Ok(client),
            Packet::ConnAck { code, .. } => Err(TcpError::Refused(code)),
            other => Err(TcpError::Unexpected(Box::new(other))),
        }
    }

    fn send(&self, packet: &Packet) -> Result<(), TcpError> {
        send(&self.writer, packet)
    }

    fn packet_id(&mut self) -> u16 {
        let id = self.next_id;
        self.next_id = self.next_id.checked_add(1).unwrap_or(1);
        id
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.reader.stream.set_read_timeout(t)
    }

    /// Waits for the matching ack, queueing any publishes that arrive first.
    fn await_reply(&mut self, want: impl Fn(&Packet) -> bool) -> Result<Packet, TcpError> {
        loop {
            let p = self.reader.next()?;
            if want(&p) {
                return Ok(p);
            }
            match p {
                Packet::Publish(p) => self.take_publish(p)?,
                other => return Err(TcpError::Unexpected(Box::new(other))),
            }
        }
    }

    fn take_publish(&mut self, p: Publish) -> Result<(), TcpError> {
        if let Some(packet_id) = p.packet_id {
            self.send(&Packet::PubAck { packet_id })?;
        }
        self.pending.push(p);
        Ok(())
    }

    pub fn subscribe(&mut self, filter: &str, qos: QoS) -> Result<u8, TcpError> {
        let packet_id = self.packet_id();
        self.send(&Packet::Subscribe(super::codec::Subscribe {
            packet_id,
            filters: vec![(filter.to_owned(), qos as u8)],
        }))?;
        match self.await_reply(|p| matches!(p, Packet::SubAck(a) if a.packet_id == packet_id))? {
            Packet::SubAck(a) => Ok(a.return_codes[0]),
            _ => unreachable!(),
        }
    }

    pub fn publish(&mut self, topic: &str, payload: &[u8], qos: QoS) -> Result<(), TcpError> {
        let packet_id = (qos == QoS::AtLeastOnce).then(|| self.packet_id());
        self.send(&Packet::Publish(Publish {
            dup: false,
            qos,
            retain: false,
            topic: topic.to_owned(),
            packet_id,
            payload: payload.to_vec(),
        }))?;
        if let Some(id) = packet_id {
            self.await_reply(|p| matches!(p, Packet::PubAck { packet_id } if *packet_id == id))?;
        }
        Ok(())
    }

    pub fn ping(&mut self) -> Result<(), TcpError> {
        self.send(&Packet::PingReq)?;
        self.await_reply(|p| matches!(p, Packet::PingResp))?;
        Ok(())
    }

    /// Blocks for the next incoming publish, acknowledging QoS 1.
    pub fn recv(&mut self) -> Result<Publish, TcpError> {
        if !self.pending.is_empty() {
            return Ok(self.pending.remove(0));
        }
        loop {
            match self.reader.next()? {
                Packet::Publish(p) => {
                    if let Some(packet_id) = p.packet_id {
                        self.send(&Packet::PubAck { packet_id })?;
                    }
                    return Ok(p);
                }
                Packet::PingResp => {}
                other => return Err(TcpError::Unexpected(Box::new(other))),
            }
        }
    }

    pub fn disconnect(self) -> Result<(), TcpError> {
        self.send(&Packet::Disconnect)
    }
}
