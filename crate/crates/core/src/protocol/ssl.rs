use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{PrincipalId, Role};
use crate::crypto::Term;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(Arc<str>);

impl SessionId {
    pub fn new(id: impl Into<Arc<str>>) -> Self {
        SessionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({})", self.0)
    }
}

/// One negotiated user-to-WS session, as the WS learns it from the private
/// negotiation channel: the host the initiator claims to be, and the key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SslSession {
    pub id: SessionId,
    pub initiator: PrincipalId,
    pub claimed: Term,
    pub key: Term,
}

/// Sessions known to the WS. Owned by the harness and never exposed to the attacker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SslRegistry {
    sessions: BTreeMap<SessionId, SslSession>,
    counters: BTreeMap<Arc<str>, u32>,
}

impl SslRegistry {
    pub fn get(&self, id: &SessionId) -> Option<&SslSession> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SslSession> {
        self.sessions.values()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negotiated {
    pub session: SessionId,
    pub key: Term,
    /// True when the key was also published to the attacker.
    pub published: bool,
}

/// Creates a fresh session key and hands it to both endpoints.
///
/// Session and key names are derived from the initiator and a per-initiator
/// counter so that independent interleavings produce identical names. When
/// the initiator is the attacker the key is published, which models the
/// attacker opening its own session with the WS while claiming `claimed`.
pub fn ssl_negotiate(registry: &mut SslRegistry, initiator: &PrincipalId, claimed: Term) -> Negotiated {
    let counter = registry.counters.entry(initiator.label.clone()).or_insert(0);
    *counter += 1;
    let n = *counter;
    let session = SessionId::new(format!("{}#{n}", initiator.label));
    let key = Term::key(format!("k_uw/{}", initiator.label), n as u128);
    registry.sessions.insert(
        session.clone(),
        SslSession { id: session.clone(), initiator: initiator.clone(), claimed, key: key.clone() },
    );
    Negotiated { session, key, published: initiator.role == Role::Attacker }
}
