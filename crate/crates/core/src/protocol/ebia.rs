//! Email-based registration baseline: request, activation mail, link access.
//!
//! Events reuse the CHAT-SRP vocabulary. The server's activation plays the
//! part of `CASendsId`, and the user reading the activation mail plays the
//! part of `UserReceivesRegistrationData` with a placeholder ticket.

use std::collections::BTreeMap;

use super::ca::ID_LABEL_PREFIX;
use super::ws::Contact;
use super::{head_tag, Channel, ChannelMsg, EventKind, Input, PrincipalId, StepOutput};
use crate::crypto::{Tag, Term};

/// Stands in for the ticket slot of `UserReceivesRegistrationData`.
pub fn no_ticket() -> Term {
    Term::name("no-ticket", 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EbiaUserStage {
    Idle,
    AwaitLink,
    AwaitConfirmation { link: Term },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EbiaUserState {
    pub id: PrincipalId,
    pub email: Term,
    pub stage: EbiaUserStage,
    pub account: Option<Term>,
}

impl EbiaUserState {
    pub fn new(id: PrincipalId, email: Term) -> Self {
        EbiaUserState { id, email, stage: EbiaUserStage::Idle, account: None }
    }

    pub fn step(&mut self, input: Input<'_>) -> StepOutput {
        let ws = PrincipalId::ws();
        match (input, &self.stage) {
            (Input::Start, EbiaUserStage::Idle) => {
                let mut out = StepOutput::default();
                out.emit(EventKind::UserRequestsRegistration, vec![self.email.clone()]);
                let body = Term::tuple([Term::Tag(Tag::Msg1), self.email.clone(), ws.host()]);
                out.send(ChannelMsg::new(Channel::Public, Tag::Msg1, self.id.clone(), ws, body));
                self.stage = EbiaUserStage::AwaitLink;
                out
            }
            (Input::Msg(msg), EbiaUserStage::AwaitLink) if msg.channel == Channel::Smtp && msg.tag == Tag::Msg4 => {
                let link = msg.payload.clone();
                let mut out = StepOutput::default();
                out.emit(
                    EventKind::UserReceivesRegistrationData,
                    vec![self.email.clone(), no_ticket(), link.clone()],
                );
                out.send(ChannelMsg::new(Channel::Public, Tag::Msg5, self.id.clone(), ws, link.clone()));
                self.stage = EbiaUserStage::AwaitConfirmation { link };
                out
            }
            (Input::Msg(msg), EbiaUserStage::AwaitConfirmation { .. })
                if msg.channel == Channel::Public && msg.tag == Tag::Msg10 =>
            {
                let parts = match msg.payload.untuple(4) {
                    Some(p) if head_tag(&msg.payload) == Some(Tag::Msg10) => p,
                    _ => return StepOutput::dropped(format!("{}: malformed confirmation", self.id)),
                };
                if *parts[2] != self.email {
                    return StepOutput::dropped(format!("{}: confirmation for another account", self.id));
                }
                let account = parts[3].clone();
                let mut out = StepOutput::default();
                out.emit(EventKind::UserReceivesId, vec![self.email.clone(), account.clone()]);
                self.account = Some(account);
                self.stage = EbiaUserStage::Done;
                out
            }
            (Input::Start, _) => StepOutput::dropped(format!("{}: registration already started", self.id)),
            (Input::Msg(msg), _) => StepOutput::dropped(format!("{}: unexpected {msg}", self.id)),
        }
    }
}

/// The EBIA web server. Any email is accepted; possession of the link is the only check.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EbiaServerState {
    pub id: PrincipalId,
    mailboxes: BTreeMap<Term, Contact>,
    /// Outstanding activation links and the account each one activates.
    pending: BTreeMap<Term, Term>,
    links_issued: BTreeMap<Term, u32>,
    accounts: BTreeMap<Term, u32>,
}

impl EbiaServerState {
    pub fn new(mailboxes: BTreeMap<Term, Contact>) -> Self {
        EbiaServerState {
            id: PrincipalId::ws(),
            mailboxes,
            pending: BTreeMap::new(),
            links_issued: BTreeMap::new(),
            accounts: BTreeMap::new(),
        }
    }

    pub fn pending_links(&self) -> usize {
        self.pending.len()
    }

    pub fn step(&mut self, msg: &ChannelMsg) -> StepOutput {
        match (&msg.channel, msg.tag) {
            (Channel::Public, Tag::Msg1) => self.on_request(&msg.payload),
            (Channel::Public, Tag::Msg5) => self.on_access(&msg.payload, &msg.src),
            _ => StepOutput::dropped(format!("ws: unexpected {msg}")),
        }
    }

    fn on_request(&mut self, body: &Term) -> StepOutput {
        let p = match body.untuple(3) {
            Some(p) if head_tag(body) == Some(Tag::Msg1) && *p[2] == self.id.host() => p,
            _ => return StepOutput::dropped("ws: malformed request"),
        };
        let email = p[1].clone();
        if self.accounts.contains_key(&email) || self.pending.values().any(|e| *e == email) {
            return StepOutput::dropped(format!("ws: {email} already has an account or an open link"));
        }
        let issued = self.links_issued.entry(email.clone()).or_insert(0);
        *issued += 1;
        let link = Term::name(format!("link/{}", email.label().unwrap_or("?")), *issued as u128);
        self.pending.insert(link.clone(), email.clone());
        let mut out = StepOutput::default();
        out.emit(EventKind::WSSendsLink, vec![email.clone(), link.clone()]);
        match self.mailboxes.get(&email) {
            Some(c) => out.send(ChannelMsg::new(Channel::Smtp, Tag::Msg4, self.id.clone(), c.owner.clone(), link)),
            None => out.note(format!("ws: no mailbox for {email}")),
        }
        out
    }

    /// Whoever presents the link activates the account; the link is single use.
    fn on_access(&mut self, link: &Term, accessor: &PrincipalId) -> StepOutput {
        let Some(email) = self.pending.remove(link) else {
            return StepOutput::dropped("ws: activation link unknown or already used");
        };
        let n = self.accounts.entry(email.clone()).or_insert(0);
        *n += 1;
        let account = Term::name(format!("{ID_LABEL_PREFIX}{}", email.label().unwrap_or("?")), *n as u128);
        let mut out = StepOutput::default();
        out.emit(EventKind::CASendsId, vec![email.clone(), account.clone()]);
        let body = Term::tuple([Term::Tag(Tag::Msg10), self.id.host(), email, account]);
        out.send(ChannelMsg::new(Channel::Public, Tag::Msg10, self.id.clone(), accessor.clone(), body));
        out
    }
}
