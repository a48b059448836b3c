//! Principal state machines for CHAT-SRP, its no-SMS ablation and the EBIA baseline.
//!
//! Every principal is a step function `(state, input) -> (state', outbound,
//! events)`. Inputs that do not fit the current automaton state are dropped and
//! leave a diagnostic note, mirroring a blocked pattern match.

mod ca;
mod ebia;
mod ra;
mod scenario;
mod ssl;
mod system;
mod user;
mod ws;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{Tag, Term};

pub use ca::{CaState, ID_LABEL_PREFIX};
pub use ebia::{no_ticket, EbiaServerState, EbiaUserStage, EbiaUserState};
pub use ra::RaState;
pub use scenario::{AttackerSpec, DirectoryEntry, Scenario, ScenarioError, UserSpec};
pub use ssl::{ssl_negotiate, Negotiated, SessionId, SslRegistry, SslSession};
pub use system::{Principals, System};
pub use user::{UserStage, UserState};
pub use ws::{Contact, WsRegistration, WsStage, WsState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Ws,
    Ra,
    Ca,
    Attacker,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Ws => "ws",
            Role::Ra => "ra",
            Role::Ca => "ca",
            Role::Attacker => "attacker",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        [Role::User, Role::Ws, Role::Ra, Role::Ca, Role::Attacker]
            .into_iter()
            .find(|r| r.as_str() == name)
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }
}

/// A principal: role plus instance label. WS, RA and CA are singletons.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrincipalId {
    pub role: Role,
    pub label: Arc<str>,
}

impl PrincipalId {
    pub fn new(role: Role, label: impl Into<Arc<str>>) -> Self {
        PrincipalId { role, label: label.into() }
    }

    pub fn ws() -> Self {
        PrincipalId::new(Role::Ws, "ws")
    }

    pub fn ra() -> Self {
        PrincipalId::new(Role::Ra, "ra")
    }

    pub fn ca() -> Self {
        PrincipalId::new(Role::Ca, "ca")
    }

    pub fn host(&self) -> Term {
        Term::Host(self.clone())
    }
}

impl fmt::Display for PrincipalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.role.as_str(), self.label)
    }
}

impl fmt::Debug for PrincipalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for PrincipalId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (role, label) = s.split_once(':').ok_or_else(|| format!("expected role:label, got '{s}'"))?;
        let role = Role::from_name(role).ok_or_else(|| format!("unknown role '{role}'"))?;
        Ok(PrincipalId::new(role, label))
    }
}

impl Serialize for PrincipalId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PrincipalId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Which protocol the principals run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "chatsrp")]
    ChatSrp,
    #[serde(rename = "chatsrp-no-sms")]
    ChatSrpNoSms,
    #[serde(rename = "ebia")]
    Ebia,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ChatSrp => "chatsrp",
            Variant::ChatSrpNoSms => "chatsrp-no-sms",
            Variant::Ebia => "ebia",
        }
    }

    pub fn uses_sms(self) -> bool {
        self == Variant::ChatSrp
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chatsrp" => Ok(Variant::ChatSrp),
            "chatsrp-no-sms" => Ok(Variant::ChatSrpNoSms),
            "ebia" => Ok(Variant::Ebia),
            other => Err(format!("unknown variant '{other}' (expected chatsrp, chatsrp-no-sms or ebia)")),
        }
    }
}

/// Channel classes. Public, SSL and plain SMTP traffic is visible to the
/// attacker (SSL payloads are ciphertexts); SMS is private and authentic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Public,
    Ssl(SessionId),
    Sms,
    Smtp,
}

impl Channel {
    pub fn is_observable(&self) -> bool {
        !matches!(self, Channel::Sms)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Public => f.write_str("public"),
            Channel::Ssl(s) => write!(f, "ssl[{s}]"),
            Channel::Sms => f.write_str("sms"),
            Channel::Smtp => f.write_str("smtp"),
        }
    }
}

/// A message in transit. `src` and `dst` are advisory on attacker-visible
/// channels; the attacker may forge both.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelMsg {
    pub channel: Channel,
    pub tag: Tag,
    pub src: PrincipalId,
    pub dst: PrincipalId,
    pub payload: Term,
}

impl ChannelMsg {
    pub fn new(channel: Channel, tag: Tag, src: PrincipalId, dst: PrincipalId, payload: Term) -> Self {
        ChannelMsg { channel, tag, src, dst, payload }
    }
}

impl fmt::Display for ChannelMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} -> {}", self.tag, self.channel, self.src, self.dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    UserRequestsRegistration,
    WSSendsSMS,
    UserProcessesSMS,
    WSSendsLink,
    RASendsTicket,
    UserReceivesRegistrationData,
    UserReceivesId,
    CASendsId,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::UserRequestsRegistration,
        EventKind::WSSendsSMS,
        EventKind::UserProcessesSMS,
        EventKind::WSSendsLink,
        EventKind::RASendsTicket,
        EventKind::UserReceivesRegistrationData,
        EventKind::UserReceivesId,
        EventKind::CASendsId,
    ];

    pub fn arity(self) -> usize {
        match self {
            EventKind::UserRequestsRegistration => 1,
            EventKind::UserReceivesRegistrationData => 3,
            _ => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::UserRequestsRegistration => "UserRequestsRegistration",
            EventKind::WSSendsSMS => "WSSendsSMS",
            EventKind::UserProcessesSMS => "UserProcessesSMS",
            EventKind::WSSendsLink => "WSSendsLink",
            EventKind::RASendsTicket => "RASendsTicket",
            EventKind::UserReceivesRegistrationData => "UserReceivesRegistrationData",
            EventKind::UserReceivesId => "UserReceivesId",
            EventKind::CASendsId => "CASendsId",
        }
    }

    pub fn from_name(name: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A protocol event. Only honest principals emit events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub args: Vec<Term>,
}

impl Event {
    pub fn new(kind: EventKind, args: Vec<Term>) -> Self {
        debug_assert_eq!(args.len(), kind.arity(), "wrong arity for {kind}");
        Event { kind, args }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// What one step of a principal produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub outbound: Vec<ChannelMsg>,
    pub events: Vec<Event>,
    pub notes: Vec<String>,
    /// SSL keys handed to the attacker by a bypass negotiation.
    pub published: Vec<Term>,
}

impl StepOutput {
    pub(crate) fn dropped(reason: impl Into<String>) -> Self {
        StepOutput { notes: vec![reason.into()], ..Default::default() }
    }

    pub(crate) fn note(&mut self, reason: impl Into<String>) {
        self.notes.push(reason.into());
    }

    pub(crate) fn emit(&mut self, kind: EventKind, args: Vec<Term>) {
        self.events.push(Event::new(kind, args));
    }

    pub(crate) fn send(&mut self, msg: ChannelMsg) {
        self.outbound.push(msg);
    }

    pub fn is_drop(&self) -> bool {
        self.outbound.is_empty() && self.events.is_empty() && self.published.is_empty()
    }
}

/// Input to a principal's step function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input<'a> {
    Start,
    Msg(&'a ChannelMsg),
}

/// Position of a delivered message in the sequence diagram of the protocol
/// ("1" to "12", with 6.1/6.2 and 7.1/7.2 split by channel).
pub fn flow_label(msg: &ChannelMsg, variant: Variant) -> Option<&'static str> {
    if variant == Variant::Ebia {
        return match (&msg.channel, msg.tag) {
            (Channel::Public, Tag::Msg1) => Some("1"),
            (Channel::Smtp, Tag::Msg4) => Some("2"),
            (Channel::Public, Tag::Msg5) => Some("3"),
            _ => None,
        };
    }
    Some(match (&msg.channel, msg.tag) {
        (Channel::Ssl(_), Tag::Msg1) => "1",
        (Channel::Sms, _) => "2",
        (Channel::Ssl(_), Tag::MsgCode) => "3",
        (Channel::Public, Tag::Msg2) => "4",
        (Channel::Public, Tag::Msg3) => "5",
        (Channel::Ssl(_), Tag::Msg4) => "6.1",
        (Channel::Smtp, Tag::Msg4) => "6.2",
        (Channel::Public, Tag::Msg5) => "7.1",
        (Channel::Ssl(_), Tag::Msg5) => "7.2",
        (Channel::Public, Tag::Msg6) => "8",
        (Channel::Public, Tag::Msg7) => "9",
        (Channel::Public, Tag::Msg8) => "10",
        (Channel::Public, Tag::Msg9) => "11",
        (Channel::Ssl(_), Tag::Msg10) => "12",
        _ => return None,
    })
}

/// Reads the tag at the head of a decrypted tuple.
pub(crate) fn head_tag(body: &Term) -> Option<Tag> {
    match body {
        Term::Pair(head, _) => match head.as_ref() {
            Term::Tag(t) => Some(*t),
            _ => None,
        },
        Term::Tag(t) => Some(*t),
        _ => None,
    }
}
