//! The Dolev-Yao attacker: what it knows and what it can do next.

mod knowledge;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crypto::{sym_encrypt, Tag, Term, OTP_LABEL};
use crate::protocol::{Channel, ChannelMsg, PrincipalId, SessionId, Variant};

pub use knowledge::{close, Derivation, Knowledge, Provenance, DEFAULT_DEPTH};

/// One attacker move at a scheduler step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AttackerAction {
    /// Read an in-flight message without disturbing it.
    Observe { msg: ChannelMsg },
    /// Remove an in-flight message.
    Block { msg: ChannelMsg },
    /// Hand a forged or replayed message to its addressee.
    Inject { msg: ChannelMsg },
    /// Open an SSL session with the WS while claiming to be `claim`.
    SslBypass { claim: Term },
    /// Let an in-flight message through unchanged.
    Deliver { msg: ChannelMsg },
}

/// An SSL session the attacker opened, with the key it learned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnSession {
    pub id: SessionId,
    pub claimed: Term,
    pub key: Term,
}

/// Everything besides knowledge and the network that shapes the attacker's options.
#[derive(Debug, Clone)]
pub struct AttackContext<'a> {
    pub variant: Variant,
    pub attacker: &'a PrincipalId,
    /// Key the attacker offers when a message asks for an identity-wrapping key.
    pub wrap_key: &'a Term,
    pub sessions: &'a [OwnSession],
    /// The attacker's own email. Forged requests and bypass claims only
    /// target other people's addresses.
    pub own_email: &'a Term,
    /// Messages seen so far, replay candidates.
    pub observed: &'a BTreeSet<ChannelMsg>,
    /// Replays already spent; each observed message is offered once.
    pub replayed: &'a BTreeSet<ChannelMsg>,
    pub allow_bypass: bool,
    pub allow_replay: bool,
}

/// Atoms in the closure that can fill the argument slots of the message grammar.
#[derive(Debug, Default)]
struct Slots {
    emails: Vec<Term>,
    codes: Vec<Term>,
    links: Vec<Term>,
    tickets: Vec<Term>,
}

fn slots(k: &Knowledge) -> Slots {
    let mut s = Slots::default();
    for t in k.analyzed() {
        match t {
            Term::Name(a) if a.label.contains('@') && a.index == 0 => s.emails.push(t.clone()),
            Term::Name(a) if &*a.label == OTP_LABEL => s.codes.push(t.clone()),
            Term::Name(a) if a.label.starts_with("link/") => s.links.push(t.clone()),
            Term::Hash(_) => s.tickets.push(t.clone()),
            _ => {}
        }
    }
    s
}

/// The finite set of attacker moves at one scheduler step.
///
/// Deliver, Block and Observe cover every in-flight message the attacker can
/// see. Injections are instances of the protocol's message grammar whose slots
/// are filled from the closure, plus verbatim replays of observed messages.
/// SMS traffic is never offered.
pub fn attacker_choices(k: &Knowledge, in_flight: &[ChannelMsg], ctx: &AttackContext<'_>) -> Vec<AttackerAction> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for msg in in_flight.iter().filter(|m| m.channel.is_observable()) {
        if seen.insert(msg) {
            out.push(AttackerAction::Deliver { msg: msg.clone() });
            out.push(AttackerAction::Block { msg: msg.clone() });
            out.push(AttackerAction::Observe { msg: msg.clone() });
        }
    }
    for msg in injections(k, ctx) {
        out.push(AttackerAction::Inject { msg });
    }
    if ctx.allow_replay {
        let in_flight: BTreeSet<&ChannelMsg> = in_flight.iter().collect();
        for msg in ctx.observed {
            let fresh = !in_flight.contains(msg) && !ctx.replayed.contains(msg);
            if msg.dst != *ctx.attacker && msg.channel.is_observable() && fresh {
                out.push(AttackerAction::Inject { msg: msg.clone() });
            }
        }
    }
    if ctx.allow_bypass && ctx.variant != Variant::Ebia {
        for claim in slots(k).emails.into_iter().filter(|e| e != ctx.own_email) {
            out.push(AttackerAction::SslBypass { claim });
        }
    }
    out
}

/// Grammar-directed forged messages.
pub fn injections(k: &Knowledge, ctx: &AttackContext<'_>) -> Vec<ChannelMsg> {
    let s = slots(k);
    let ws = PrincipalId::ws();
    let me = ctx.attacker.clone();
    let mut out = Vec::new();
    let public = |tag: Tag, payload: Term| ChannelMsg::new(Channel::Public, tag, me.clone(), ws.clone(), payload);
    match ctx.variant {
        Variant::Ebia => {
            for e in s.emails.iter().filter(|e| *e != ctx.own_email) {
                out.push(public(Tag::Msg1, Term::tuple([Term::Tag(Tag::Msg1), e.clone(), ws.host()])));
            }
        }
        Variant::ChatSrp | Variant::ChatSrpNoSms => {
            for sess in ctx.sessions {
                let seal = |tag: Tag, body: Term| {
                    let payload = sym_encrypt(body, sess.key.clone()).expect("session keys are keys");
                    ChannelMsg::new(Channel::Ssl(sess.id.clone()), tag, me.clone(), ws.clone(), payload)
                };
                let h = sess.claimed.clone();
                out.push(seal(Tag::Msg1, Term::tuple([Term::Tag(Tag::Msg1), h.clone(), ws.host()])));
                if ctx.variant.uses_sms() {
                    for c in &s.codes {
                        out.push(seal(Tag::MsgCode, Term::tuple([Term::Tag(Tag::MsgCode), h.clone(), ws.host(), c.clone()])));
                    }
                }
                for t in &s.tickets {
                    for l in &s.links {
                        out.push(seal(Tag::Msg5, Term::tuple([
                            Term::Tag(Tag::Msg5),
                            h.clone(),
                            ws.host(),
                            t.clone(),
                            l.clone(),
                            ctx.wrap_key.clone(),
                        ])));
                    }
                }
            }
        }
    }
    for l in &s.links {
        out.push(public(Tag::Msg5, l.clone()));
    }
    out.retain(|m| k.can_derive(&m.payload));
    out
}
