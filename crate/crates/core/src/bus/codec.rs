//! MQTT 3.1.1 wire encoding for the supported packet subset.
//!
//! Supported: CONNECT, CONNACK, PUBLISH, PUBACK, SUBSCRIBE, SUBACK,
//! PINGREQ, PINGRESP and DISCONNECT. Anything else decodes to
//! [`CodecError::Unsupported`].

/// Largest remaining-length value the variable-length encoding can carry.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

/// Largest packet this implementation will buffer.
pub const MAX_PACKET_BYTES: usize = 256 * 1024;

const PROTOCOL_NAME: &str = "MQTT";
const PROTOCOL_LEVEL: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed remaining length")]
    MalformedRemainingLength,
    #[error("packet of {0} bytes exceeds the implementation limit")]
    PacketTooLarge(usize),
    #[error("reserved packet type {0}")]
    ReservedType(u8),
    #[error("unsupported packet type {0}")]
    Unsupported(u8),
    #[error("invalid fixed-header flags {flags:#06b} for packet type {packet_type}")]
    BadFlags { packet_type: u8, flags: u8 },
    #[error("packet body truncated")]
    Truncated,
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("string contains U+0000")]
    NulInString,
    #[error("string longer than 65535 bytes")]
    StringTooLong,
    #[error("unsupported protocol `{name}` level {level}")]
    BadProtocol { name: String, level: u8 },
    #[error("invalid CONNECT flags {0:#010b}")]
    BadConnectFlags(u8),
    #[error("invalid QoS {0}")]
    InvalidQos(u8),
    #[error("packet identifier must be non-zero")]
    ZeroPacketId,
    #[error("SUBSCRIBE carries no topic filters")]
    EmptySubscribe,
    #[error("unknown CONNACK return code {0}")]
    BadReturnCode(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
}

impl QoS {
    pub fn from_u8(v: u8) -> Option<QoS> {
        match v {
            0 => Some(QoS::AtMostOnce),
            1 => Some(QoS::AtLeastOnce),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Will {
    pub topic: String,
    pub message: Vec<u8>,
    pub qos: u8,
    pub retain: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub keep_alive: u16,
    pub clean_session: bool,
    pub will: Option<Will>,
    pub username: Option<String>,
    pub password: Option<Vec<u8>>,
}

impl Connect {
    pub fn new(client_id: impl Into<String>, keep_alive: u16) -> Self {
        Self {
            client_id: client_id.into(),
            keep_alive,
            clean_session: true,
            will: None,
            username: None,
            password: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocol = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadCredentials = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_u8(v: u8) -> Result<Self, CodecError> {
        Ok(match v {
            0 => Self::Accepted,
            1 => Self::UnacceptableProtocol,
            2 => Self::IdentifierRejected,
            3 => Self::ServerUnavailable,
            4 => Self::BadCredentials,
            5 => Self::NotAuthorized,
            other => return Err(CodecError::BadReturnCode(other)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Publish {
    pub dup: bool,
    pub qos: QoS,
    pub retain: bool,
    pub topic: String,
    /// Present iff `qos` is at least once.
    pub packet_id: Option<u16>,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subscribe {
    pub packet_id: u16,
    /// `(filter, requested QoS 0..=2)`.
    pub filters: Vec<(String, u8)>,
}

/// SUBACK return code for a failed subscription.
pub const SUBACK_FAILURE: u8 = 0x80;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubAck {
    pub packet_id: u16,
    /// Granted QoS per filter, or [`SUBACK_FAILURE`].
    pub return_codes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    ConnAck { session_present: bool, code: ConnectReturnCode },
    Publish(Publish),
    PubAck { packet_id: u16 },
    Subscribe(Subscribe),
    SubAck(SubAck),
    PingReq,
    PingResp,
    Disconnect,
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, CodecError> {
        let (&b, rest) = self.buf.split_first().ok_or(CodecError::Truncated)?;
        self.buf = rest;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn binary(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u16()? as usize;
        self.bytes(n)
    }

    fn string(&mut self) -> Result<String, CodecError> {
        let raw = self.binary()?;
        let s = std::str::from_utf8(raw).map_err(|_| CodecError::InvalidUtf8)?;
        if s.contains('\0') {
            return Err(CodecError::NulInString);
        }
        Ok(s.to_owned())
    }

    fn packet_id(&mut self) -> Result<u16, CodecError> {
        match self.u16()? {
            0 => Err(CodecError::ZeroPacketId),
            id => Ok(id),
        }
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    fn finish(&self) -> Result<(), CodecError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_binary(out: &mut Vec<u8>, b: &[u8]) -> Result<(), CodecError> {
    let n = u16::try_from(b.len()).map_err(|_| CodecError::StringTooLong)?;
    put_u16(out, n);
    out.extend_from_slice(b);
    Ok(())
}

fn put_string(out: &mut Vec<u8>, s: &str) -> Result<(), CodecError> {
    if s.contains('\0') {
        return Err(CodecError::NulInString);
    }
    put_binary(out, s.as_bytes())
}

fn put_remaining_length(out: &mut Vec<u8>, mut n: usize) -> Result<(), CodecError> {
    if n > MAX_REMAINING_LENGTH {
        return Err(CodecError::PacketTooLarge(n));
    }
    loop {
        let mut byte = (n % 128) as u8;
        n /= 128;
        if n > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if n == 0 {
            return Ok(());
        }
    }
}

/// Decodes the remaining-length field starting at `buf[0]`.
/// Returns `(value, bytes used)` or `None` if more bytes are needed.
fn read_remaining_length(buf: &[u8]) -> Result<Option<(usize, usize)>, CodecError> {
    let mut value = 0usize;
    let mut multiplier = 1usize;
    for (i, &b) in buf.iter().enumerate() {
        if i == 4 {
            return Err(CodecError::MalformedRemainingLength);
        }
        value += usize::from(b & 0x7F) * multiplier;
        if b & 0x80 == 0 {
            // Non-minimal encodings such as 0x80 0x00 are still valid 3.1.1;
            // only the 4-byte cap is enforced.
            return Ok(Some((value, i + 1)));
        }
        multiplier *= 128;
    }
    if buf.len() >= 4 {
        return Err(CodecError::MalformedRemainingLength);
    }
    Ok(None)
}

impl Packet {
    /// Decodes one packet from the front of `buf`.
    ///
    /// Returns `Ok(None)` when `buf` holds an incomplete packet, otherwise
    /// the packet and the number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<Option<(Packet, usize)>, CodecError> {
        let Some(&first) = buf.first() else {
            return Ok(None);
        };
        let packet_type = first >> 4;
        let flags = first & 0x0F;
        if packet_type == 0 || packet_type == 15 {
            return Err(CodecError::ReservedType(packet_type));
        }
        let Some((len, len_bytes)) = read_remaining_length(&buf[1..])? else {
            return Ok(None);
        };
        let total = 1 + len_bytes + len;
        if total > MAX_PACKET_BYTES {
            return Err(CodecError::PacketTooLarge(total));
        }
        if buf.len() < total {
            return Ok(None);
        }
        let body = &buf[1 + len_bytes..total];
        let packet = Self::decode_body(packet_type, flags, body)?;
        Ok(Some((packet, total)))
    }

    fn decode_body(packet_type: u8, flags: u8, body: &[u8]) -> Result<Packet, CodecError> {
        let expect_flags = |want: u8| {
            if flags == want {
                Ok(())
            } else {
                Err(CodecError::BadFlags { packet_type, flags })
            }
        };
        let mut r = Reader { buf: body };
        let packet = match packet_type {
            1 => {
                expect_flags(0)?;
                Packet::Connect(Self::decode_connect(&mut r)?)
            }
            2 => {
                expect_flags(0)?;
                let ack_flags = r.u8()?;
                if ack_flags & 0xFE != 0 {
                    return Err(CodecError::BadFlags { packet_type, flags: ack_flags });
                }
                let code = ConnectReturnCode::from_u8(r.u8()?)?;
                Packet::ConnAck { session_present: ack_flags & 1 == 1, code }
            }
            3 => {
                let dup = flags & 0b1000 != 0;
                let qos_bits = (flags >> 1) & 0b11;
                let retain = flags & 1 != 0;
                let qos = QoS::from_u8(qos_bits).ok_or(CodecError::InvalidQos(qos_bits))?;
                if qos == QoS::AtMostOnce && dup {
                    return Err(CodecError::BadFlags { packet_type, flags });
                }
                let topic = r.string()?;
                let packet_id = match qos {
                    QoS::AtMostOnce => None,
                    QoS::AtLeastOnce => Some(r.packet_id()?),
                };
                let payload = r.rest().to_vec();
                return Ok(Packet::Publish(Publish { dup, qos, retain, topic, packet_id, payload }));
            }
            4 => {
                expect_flags(0)?;
                Packet::PubAck { packet_id: r.packet_id()? }
            }
            8 => {
                expect_flags(0b0010)?;
                let packet_id = r.packet_id()?;
                let mut filters = Vec::new();
                while !r.buf.is_empty() {
                    let f = r.string()?;
                    let q = r.u8()?;
                    if q > 2 {
                        return Err(CodecError::InvalidQos(q));
                    }
                    filters.push((f, q));
                }
                if filters.is_empty() {
                    return Err(CodecError::EmptySubscribe);
                }
                return Ok(Packet::Subscribe(Subscribe { packet_id, filters }));
            }
            9 => {
                expect_flags(0)?;
                let packet_id = r.packet_id()?;
                let return_codes = r.rest().to_vec();
                if let Some(&bad) = return_codes.iter().find(|&&c| !matches!(c, 0 | 1 | 2 | SUBACK_FAILURE)) {
                    return Err(CodecError::InvalidQos(bad));
                }
                return Ok(Packet::SubAck(SubAck { packet_id, return_codes }));
            }
            12 => {
                expect_flags(0)?;
                Packet::PingReq
            }
            13 => {
                expect_flags(0)?;
                Packet::PingResp
            }
            14 => {
                expect_flags(0)?;
                Packet::Disconnect
            }
            other => return Err(CodecError::Unsupported(other)),
        };
        r.finish()?;
        Ok(packet)
    }

    fn decode_connect(r: &mut Reader<'_>) -> Result<Connect, CodecError> {
        let name = r.string()?;
        let level = r.u8()?;
        if name != PROTOCOL_NAME || level != PROTOCOL_LEVEL {
            return Err(CodecError::BadProtocol { name, level });
        }
        let cf = r.u8()?;
        let reserved = cf & 0x01 != 0;
        let clean_session = cf & 0x02 != 0;
        let will_flag = cf & 0x04 != 0;
        let will_qos = (cf >> 3) & 0b11;
        let will_retain = cf & 0x20 != 0;
        let password_flag = cf & 0x40 != 0;
        let username_flag = cf & 0x80 != 0;
        if reserved
            || will_qos == 3
            || (!will_flag && (will_qos != 0 || will_retain))
            || (password_flag && !username_flag)
        {
            return Err(CodecError::BadConnectFlags(cf));
        }
        let keep_alive = r.u16()?;
        let client_id = r.string()?;
        let will = if will_flag {
            let topic = r.string()?;
            let message = r.binary()?.to_vec();
            Some(Will { topic, message, qos: will_qos, retain: will_retain })
        } else {
            None
        };
        let username = if username_flag { Some(r.string()?) } else { None };
        let password = if password_flag { Some(r.binary()?.to_vec()) } else { None };
        Ok(Connect { client_id, keep_alive, clean_session, will, username, password })
    }

    /// Appends the wire encoding of `self` to `out`.
    pub fn encode(&self, out: &mut Vec<u8>) -> Result<(), CodecError> {
        let mut body = Vec::new();
        let header = match self {
            Packet::Connect(c) => {
                put_string(&mut body, PROTOCOL_NAME)?;
                body.push(PROTOCOL_LEVEL);
                let mut cf = 0u8;
                if c.clean_session {
                    cf |= 0x02;
                }
                if let Some(w) = &c.will {
                    if w.qos > 2 {
                        return Err(CodecError::InvalidQos(w.qos));
                    }
                    cf |= 0x04 | (w.qos << 3);
                    if w.retain {
                        cf |= 0x20;
                    }
                }
                if c.password.is_some() {
                    if c.username.is_none() {
                        return Err(CodecError::BadConnectFlags(0x40));
                    }
                    cf |= 0x40;
                }
                if c.username.is_some() {
                    cf |= 0x80;
                }
                body.push(cf);
                put_u16(&mut body, c.keep_alive);
                put_string(&mut body, &c.client_id)?;
                if let Some(w) = &c.will {
                    put_string(&mut body, &w.topic)?;
                    put_binary(&mut body, &w.message)?;
                }
                if let Some(u) = &c.username {
                    put_string(&mut body, u)?;
                }
                if let Some(p) = &c.password {
                    put_binary(&mut body, p)?;
                }
                0x10
            }
            Packet::ConnAck { session_present, code } => {
                body.push(u8::from(*session_present));
                body.push(*code as u8);
                0x20
            }
            Packet::Publish(p) => {
                put_string(&mut body, &p.topic)?;
                match (p.qos, p.packet_id) {
                    (QoS::AtMostOnce, None) => {}
                    (QoS::AtLeastOnce, Some(id)) if id != 0 => put_u16(&mut body, id),
                    (QoS::AtLeastOnce, _) => return Err(CodecError::ZeroPacketId),
                    (QoS::AtMostOnce, Some(_)) => return Err(CodecError::InvalidQos(0)),
                }
                if p.qos == QoS::AtMostOnce && p.dup {
                    return Err(CodecError::BadFlags { packet_type: 3, flags: 0b1000 });
                }
                body.extend_from_slice(&p.payload);
                0x30 | (u8::from(p.dup) << 3) | ((p.qos as u8) << 1) | u8::from(p.retain)
            }
            Packet::PubAck { packet_id } => {
                if *packet_id == 0 {
                    return Err(CodecError::ZeroPacketId);
                }
                put_u16(&mut body, *packet_id);
                0x40
            }
            Packet::Subscribe(s) => {
                if s.packet_id == 0 {
                    return Err(CodecError::ZeroPacketId);
                }
                if s.filters.is_empty() {
                    return Err(CodecError::EmptySubscribe);
                }
                put_u16(&mut body, s.packet_id);
                for (f, q) in &s.filters {
                    if *q > 2 {
                        return Err(CodecError::InvalidQos(*q));
                    }
                    put_string(&mut body, f)?;
                    body.push(*q);
                }
                0x82
            }
            Packet::SubAck(s) => {
                if s.packet_id == 0 {
                    return Err(CodecError::ZeroPacketId);
                }
                put_u16(&mut body, s.packet_id);
                body.extend_from_slice(&s.return_codes);
                0x90
            }
            Packet::PingReq => 0xC0,
            Packet::PingResp => 0xD0,
            Packet::Disconnect => 0xE0,
        };
        out.push(header);
        put_remaining_length(out, body.len())?;
        out.extend_from_slice(&body);
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::new();
        self.encode(&mut out)?;
        Ok(out)
    }
}
