use std::borrow::Cow;
use std::fmt;

/// Topic names and filters are MQTT UTF-8 strings: at most 65535 bytes, no NUL.
const MAX_TOPIC_BYTES: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic longer than 65535 bytes")]
    TooLong,
    #[error("topic `{0}` has an empty segment")]
    EmptySegment(String),
    #[error("topic `{0}` contains a NUL character")]
    Nul(String),
    #[error("wildcards are not allowed in topic name `{0}`")]
    WildcardInName(String),
    #[error("invalid wildcard placement in filter `{0}`")]
    BadWildcard(String),
}

fn check_common(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.len() > MAX_TOPIC_BYTES {
        return Err(TopicError::TooLong);
    }
    if s.contains('\0') {
        return Err(TopicError::Nul(s.to_owned()));
    }
    if s.split('/').any(str::is_empty) {
        return Err(TopicError::EmptySegment(s.to_owned()));
    }
    Ok(())
}

/// Maps the legacy `Stage{N}Sensing` / `Stage{N}Actuating` /
/// `Stage{N}ManualActuating` names onto `cypha/stage{N}/...`.
pub fn canonicalize(s: &str) -> Cow<'_, str> {
    let Some(rest) = s.strip_prefix("Stage") else {
        return Cow::Borrowed(s);
    };
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Cow::Borrowed(s);
    }
    let (n, kind) = rest.split_at(digits);
    let kind = match kind {
        "Sensing" => "sensing",
        "Actuating" => "actuating",
        "ManualActuating" => "manual",
        _ => return Cow::Borrowed(s),
    };
    Cow::Owned(format!("cypha/stage{n}/{kind}"))
}

/// A concrete topic name a message is published to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn new(s: &str) -> Result<Self, TopicError> {
        let s = canonicalize(s);
        check_common(&s)?;
        if s.contains(['+', '#']) {
            return Err(TopicError::WildcardInName(s.into_owned()));
        }
        Ok(Topic(s.into_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A subscription pattern. `+` matches one segment, a trailing `#` matches
/// any suffix including the empty one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TopicFilter(String);

impl TopicFilter {
    pub fn new(s: &str) -> Result<Self, TopicError> {
        let s = canonicalize(s);
        check_common(&s)?;
        let segs: Vec<&str> = s.split('/').collect();
        for (i, seg) in segs.iter().enumerate() {
            let wild = seg.contains(['+', '#']);
            if wild && seg.len() != 1 {
                return Err(TopicError::BadWildcard(s.into_owned()));
            }
            if *seg == "#" && i + 1 != segs.len() {
                return Err(TopicError::BadWildcard(s.into_owned()));
            }
        }
        Ok(TopicFilter(s.into_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        matches(self, topic)
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// MQTT topic matching.
pub fn matches(filter: &TopicFilter, topic: &Topic) -> bool {
    let mut f = filter.0.split('/');
    let mut t = topic.0.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}
