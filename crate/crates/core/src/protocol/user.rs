use std::collections::BTreeSet;

use super::{head_tag, ssl_negotiate, Channel, ChannelMsg, EventKind, Input, PrincipalId, SessionId, SslRegistry, StepOutput, Variant};
use crate::crypto::{id_decrypt, sym_decrypt, sym_encrypt, Tag, Term};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UserStage {
    Idle,
    AwaitSms,
    AwaitRegistrationData { session: SessionId, key: Term },
    AwaitId { session: SessionId, key: Term, wrap: Term },
    Done,
}

/// A CHAT-SRP user running one registration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserState {
    pub id: PrincipalId,
    pub email: Term,
    pub stage: UserStage,
    /// Ticket and link from message 4, held until the activation mail arrives.
    pending_data: Option<(Term, Term)>,
    inbox: BTreeSet<Term>,
    wraps: u32,
    pub ticket: Option<Term>,
    pub link: Option<Term>,
    pub identity: Option<Term>,
}

impl UserState {
    pub fn new(id: PrincipalId, email: Term) -> Self {
        UserState {
            id,
            email,
            stage: UserStage::Idle,
            pending_data: None,
            inbox: BTreeSet::new(),
            wraps: 0,
            ticket: None,
            link: None,
            identity: None,
        }
    }

    fn ws() -> PrincipalId {
        PrincipalId::ws()
    }

    fn secure(&self, session: &SessionId, tag: Tag, body: Term, key: &Term) -> ChannelMsg {
        let payload = sym_encrypt(body, key.clone()).expect("session keys are keys");
        ChannelMsg::new(Channel::Ssl(session.clone()), tag, self.id.clone(), Self::ws(), payload)
    }

    pub fn step(&mut self, input: Input<'_>, variant: Variant, ssl: &mut SslRegistry) -> StepOutput {
        match input {
            Input::Start => self.start(variant, ssl),
            Input::Msg(msg) => self.receive(msg, ssl),
        }
    }

    fn start(&mut self, variant: Variant, ssl: &mut SslRegistry) -> StepOutput {
        if self.stage != UserStage::Idle {
            return StepOutput::dropped(format!("{}: registration already started", self.id));
        }
        let n = ssl_negotiate(ssl, &self.id, self.email.clone());
        let mut out = StepOutput::default();
        out.emit(EventKind::UserRequestsRegistration, vec![self.email.clone()]);
        let body = Term::tuple([Term::Tag(Tag::Msg1), self.email.clone(), Self::ws().host()]);
        out.send(self.secure(&n.session, Tag::Msg1, body, &n.key));
        self.stage = if variant.uses_sms() {
            UserStage::AwaitSms
        } else {
            UserStage::AwaitRegistrationData { session: n.session, key: n.key }
        };
        out
    }

    fn receive(&mut self, msg: &ChannelMsg, ssl: &mut SslRegistry) -> StepOutput {
        match (&msg.channel, msg.tag) {
            (Channel::Sms, _) => self.on_sms(msg, ssl),
            (Channel::Smtp, Tag::Msg4) => {
                if self.stage == UserStage::Idle {
                    return StepOutput::dropped(format!("{}: unsolicited activation mail", self.id));
                }
                self.inbox.insert(msg.payload.clone());
                self.try_complete_registration_data(ssl)
            }
            (Channel::Ssl(session), Tag::Msg4) => self.on_registration_data(session, &msg.payload, ssl),
            (Channel::Ssl(session), Tag::Msg10) => self.on_identity(session, &msg.payload),
            _ => StepOutput::dropped(format!("{}: unexpected {}", self.id, msg)),
        }
    }

    fn on_sms(&mut self, msg: &ChannelMsg, ssl: &mut SslRegistry) -> StepOutput {
        if self.stage != UserStage::AwaitSms {
            return StepOutput::dropped(format!("{}: SMS outside the code round", self.id));
        }
        let Some([who, code]) = msg.payload.untuple(2).and_then(|v| <[&Term; 2]>::try_from(v).ok()) else {
            return StepOutput::dropped(format!("{}: malformed SMS", self.id));
        };
        if *who != self.email {
            return StepOutput::dropped(format!("{}: SMS for another user", self.id));
        }
        let code = code.clone();
        let n = ssl_negotiate(ssl, &self.id, self.email.clone());
        let mut out = StepOutput::default();
        out.emit(EventKind::UserProcessesSMS, vec![self.email.clone(), code.clone()]);
        let body = Term::tuple([Term::Tag(Tag::MsgCode), self.email.clone(), Self::ws().host(), code]);
        out.send(self.secure(&n.session, Tag::MsgCode, body, &n.key));
        self.stage = UserStage::AwaitRegistrationData { session: n.session, key: n.key };
        out
    }

    fn on_registration_data(&mut self, session: &SessionId, payload: &Term, ssl: &mut SslRegistry) -> StepOutput {
        let UserStage::AwaitRegistrationData { session: expected, key } = &self.stage else {
            return StepOutput::dropped(format!("{}: message 4 out of order", self.id));
        };
        if session != expected {
            return StepOutput::dropped(format!("{}: message 4 on a foreign session", self.id));
        }
        let Ok(body) = sym_decrypt(payload, key) else {
            return StepOutput::dropped(format!("{}: message 4 does not decrypt", self.id));
        };
        let parts = match body.untuple(5) {
            Some(p) if head_tag(&body) == Some(Tag::Msg4) => p,
            _ => return StepOutput::dropped(format!("{}: malformed message 4", self.id)),
        };
        if *parts[1] != Self::ws().host() || *parts[2] != self.email {
            return StepOutput::dropped(format!("{}: message 4 for another principal", self.id));
        }
        self.pending_data = Some((parts[3].clone(), parts[4].clone()));
        self.try_complete_registration_data(ssl)
    }

    /// Message 6 arrives in two halves: ticket and link over SSL, link again by mail.
    fn try_complete_registration_data(&mut self, ssl: &mut SslRegistry) -> StepOutput {
        let Some((ticket, link)) = self.pending_data.clone() else {
            return StepOutput::default();
        };
        if !self.inbox.contains(&link) || !matches!(self.stage, UserStage::AwaitRegistrationData { .. }) {
            return StepOutput::default();
        }
        self.pending_data = None;
        let mut out = StepOutput::default();
        out.emit(
            EventKind::UserReceivesRegistrationData,
            vec![self.email.clone(), ticket.clone(), link.clone()],
        );
        let n = ssl_negotiate(ssl, &self.id, self.email.clone());
        self.wraps += 1;
        let wrap = Term::key(format!("k/{}", self.id.label), self.wraps as u128);
        // 7.1: the activation link is accessed in the clear.
        out.send(ChannelMsg::new(Channel::Public, Tag::Msg5, self.id.clone(), Self::ws(), link.clone()));
        let body = Term::tuple([
            Term::Tag(Tag::Msg5),
            self.email.clone(),
            Self::ws().host(),
            ticket.clone(),
            link.clone(),
            wrap.clone(),
        ]);
        out.send(self.secure(&n.session, Tag::Msg5, body, &n.key));
        self.ticket = Some(ticket);
        self.link = Some(link);
        self.stage = UserStage::AwaitId { session: n.session, key: n.key, wrap };
        out
    }

    fn on_identity(&mut self, session: &SessionId, payload: &Term) -> StepOutput {
        let UserStage::AwaitId { session: expected, key, wrap } = &self.stage else {
            return StepOutput::dropped(format!("{}: message 10 out of order", self.id));
        };
        if session != expected {
            return StepOutput::dropped(format!("{}: message 10 on a foreign session", self.id));
        }
        let Ok(body) = sym_decrypt(payload, key) else {
            return StepOutput::dropped(format!("{}: message 10 does not decrypt", self.id));
        };
        let parts = match body.untuple(4) {
            Some(p) if head_tag(&body) == Some(Tag::Msg10) => p,
            _ => return StepOutput::dropped(format!("{}: malformed message 10", self.id)),
        };
        if *parts[1] != Self::ws().host() || *parts[2] != self.email {
            return StepOutput::dropped(format!("{}: message 10 for another principal", self.id));
        }
        let Ok(identity) = id_decrypt(parts[3], wrap) else {
            return StepOutput::dropped(format!("{}: identity not wrapped under my key", self.id));
        };
        let mut out = StepOutput::default();
        out.emit(EventKind::UserReceivesId, vec![self.email.clone(), identity.clone()]);
        self.identity = Some(identity);
        self.stage = UserStage::Done;
        out
    }
}
