use std::collections::{BTreeMap, BTreeSet};

use super::{head_tag, Channel, ChannelMsg, EventKind, PrincipalId, SessionId, SslRegistry, StepOutput, Variant};
use crate::crypto::{sym_decrypt, sym_encrypt, Tag, Term, OTP_LABEL};
use crate::prng::{KeyedPrng, OtpCode};

/// How the WS reaches an email holder: the mailbox owner, and the handset
/// behind the phone number on file, if any.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Contact {
    pub owner: PrincipalId,
    pub phone: Option<(String, PrincipalId)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WsStage {
    AwaitCode,
    AwaitTicket,
    AwaitActivation,
    AwaitId,
    Done,
}

/// Per-email registration record at the WS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WsRegistration {
    pub stage: WsStage,
    pub otp: Option<OtpCode>,
    /// Session over which the ticket and link go back (the one that proved the code).
    pub reply: Option<SessionId>,
    pub link: Option<Term>,
    pub link_accessed: bool,
    /// Buffered message 7.2: session, presented ticket, wrap key.
    pub activation: Option<(SessionId, Term, Term)>,
    /// Session the identity is returned on.
    pub delivery: Option<SessionId>,
}

impl WsRegistration {
    fn new(stage: WsStage) -> Self {
        WsRegistration {
            stage,
            otp: None,
            reply: None,
            link: None,
            link_accessed: false,
            activation: None,
            delivery: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WsState {
    pub id: PrincipalId,
    k_wr: Term,
    /// Pre-provisioned; never written during a run.
    contacts: BTreeMap<Term, Contact>,
    regs: BTreeMap<Term, WsRegistration>,
    links_issued: BTreeMap<Term, u32>,
    /// Sessions that already carried a registration request; each carries one.
    served: BTreeSet<SessionId>,
    prng: KeyedPrng,
}

pub(crate) fn otp_term(code: OtpCode) -> Term {
    Term::name(OTP_LABEL, code.value() as u128)
}

impl WsState {
    pub fn new(k_wr: Term, contacts: BTreeMap<Term, Contact>, prng: KeyedPrng) -> Self {
        WsState {
            id: PrincipalId::ws(),
            k_wr,
            contacts,
            regs: BTreeMap::new(),
            links_issued: BTreeMap::new(),
            served: BTreeSet::new(),
            prng,
        }
    }

    pub fn registration(&self, email: &Term) -> Option<&WsRegistration> {
        self.regs.get(email)
    }

    pub fn contacts(&self) -> &BTreeMap<Term, Contact> {
        &self.contacts
    }

    fn to_ra(&self, body: Term) -> ChannelMsg {
        let tag = head_tag(&body).expect("bodies start with a tag");
        let payload = sym_encrypt(body, self.k_wr.clone()).expect("k_wr is a key");
        ChannelMsg::new(Channel::Public, tag, self.id.clone(), PrincipalId::ra(), payload)
    }

    pub fn step(&mut self, msg: &ChannelMsg, variant: Variant, ssl: &SslRegistry) -> StepOutput {
        match &msg.channel {
            Channel::Ssl(session) => self.on_session_message(session, msg, variant, ssl),
            Channel::Public if msg.tag == Tag::Msg5 => self.on_link_access(&msg.payload),
            Channel::Public => self.on_backend(&msg.payload, ssl),
            _ => StepOutput::dropped(format!("ws: unexpected {msg}")),
        }
    }

    fn on_session_message(&mut self, session: &SessionId, msg: &ChannelMsg, variant: Variant, ssl: &SslRegistry) -> StepOutput {
        let Some(s) = ssl.get(session) else {
            return StepOutput::dropped(format!("ws: no such session {session}"));
        };
        let Ok(body) = sym_decrypt(&msg.payload, &s.key) else {
            return StepOutput::dropped(format!("ws: payload does not decrypt under session {session}"));
        };
        let claimed = s.claimed.clone();
        match head_tag(&body) {
            Some(Tag::Msg1) => self.on_request(&body, &claimed, session, variant),
            Some(Tag::MsgCode) if variant.uses_sms() => self.on_code(&body, &claimed, session),
            Some(Tag::Msg5) => self.on_ticket_return(&body, &claimed, session),
            _ => StepOutput::dropped(format!("ws: unexpected body on session {session}")),
        }
    }

    fn on_request(&mut self, body: &Term, claimed: &Term, session: &SessionId, variant: Variant) -> StepOutput {
        let Some(p) = body.untuple(3) else {
            return StepOutput::dropped("ws: malformed message 1");
        };
        if p[1] != claimed || *p[2] != self.id.host() {
            return StepOutput::dropped("ws: message 1 does not match the session");
        }
        let email = claimed.clone();
        let Some(contact) = self.contacts.get(&email).cloned() else {
            return StepOutput::dropped(format!("ws: unknown-email {email}"));
        };
        if self.served.contains(session) {
            return StepOutput::dropped(format!("ws: session {session} already carried a request"));
        }
        if self.regs.get(&email).is_some_and(|r| r.stage != WsStage::Done) {
            return StepOutput::dropped(format!("ws: registration for {email} already pending"));
        }
        let mut out = StepOutput::default();
        if variant.uses_sms() {
            let Some((phone, handset)) = contact.phone else {
                return StepOutput::dropped(format!("ws: unknown-email {email} (no phone on file)"));
            };
            self.served.insert(session.clone());
            let code = self.prng.generate_otp(&email.to_string());
            let mut reg = WsRegistration::new(WsStage::AwaitCode);
            reg.otp = Some(code);
            self.regs.insert(email.clone(), reg);
            out.emit(EventKind::WSSendsSMS, vec![email.clone(), otp_term(code)]);
            out.note(format!("ws: SMS to {phone}"));
            out.send(ChannelMsg::new(
                Channel::Sms,
                Tag::MsgCode,
                self.id.clone(),
                handset,
                Term::pair(email, otp_term(code)),
            ));
        } else {
            self.served.insert(session.clone());
            let mut reg = WsRegistration::new(WsStage::AwaitTicket);
            reg.reply = Some(session.clone());
            self.regs.insert(email.clone(), reg);
            out.send(self.ticket_request(&email));
        }
        out
    }

    fn ticket_request(&self, email: &Term) -> ChannelMsg {
        self.to_ra(Term::tuple([Term::Tag(Tag::Msg2), self.id.host(), PrincipalId::ra().host(), email.clone()]))
    }

    fn on_code(&mut self, body: &Term, claimed: &Term, session: &SessionId) -> StepOutput {
        let Some(p) = body.untuple(4) else {
            return StepOutput::dropped("ws: malformed code message");
        };
        if p[1] != claimed || *p[2] != self.id.host() {
            return StepOutput::dropped("ws: code message does not match the session");
        }
        let Some(reg) = self.regs.get_mut(claimed) else {
            return StepOutput::dropped(format!("ws: no registration pending for {claimed}"));
        };
        match reg.otp {
            Some(code) if reg.stage == WsStage::AwaitCode && otp_term(code) == *p[3] => {
                reg.stage = WsStage::AwaitTicket;
                reg.otp = None;
                reg.reply = Some(session.clone());
                let mut out = StepOutput::default();
                out.send(self.ticket_request(claimed));
                out
            }
            _ => StepOutput::dropped(format!("ws: otp-mismatch for {claimed}")),
        }
    }

    fn on_backend(&mut self, payload: &Term, ssl: &SslRegistry) -> StepOutput {
        let Ok(body) = sym_decrypt(payload, &self.k_wr) else {
            return StepOutput::dropped("ws: public message not under k_wr");
        };
        match head_tag(&body) {
            Some(Tag::Msg3) => self.on_ticket(&body, ssl),
            Some(Tag::Msg9) => self.on_identity(&body, ssl),
            _ => StepOutput::dropped("ws: unexpected backend message"),
        }
    }

    fn on_ticket(&mut self, body: &Term, ssl: &SslRegistry) -> StepOutput {
        let Some(p) = body.untuple(5) else {
            return StepOutput::dropped("ws: malformed message 3");
        };
        if *p[1] != PrincipalId::ra().host() || *p[2] != self.id.host() {
            return StepOutput::dropped("ws: misaddressed message 3");
        }
        let (email, ticket) = (p[3].clone(), p[4].clone());
        let Some(reg) = self.regs.get_mut(&email) else {
            return StepOutput::dropped(format!("ws: ticket for unknown registration {email}"));
        };
        if reg.stage != WsStage::AwaitTicket {
            return StepOutput::dropped(format!("ws: ticket for {email} out of order"));
        }
        let session = reg.reply.clone().expect("reply session set before requesting a ticket");
        let Some(s) = ssl.get(&session) else {
            return StepOutput::dropped(format!("ws: reply session {session} vanished"));
        };
        let issued = self.links_issued.entry(email.clone()).or_insert(0);
        *issued += 1;
        let link = Term::name(format!("link/{}", email.label().unwrap_or("?")), *issued as u128);
        reg.stage = WsStage::AwaitActivation;
        reg.link = Some(link.clone());

        let mut out = StepOutput::default();
        out.emit(EventKind::WSSendsLink, vec![email.clone(), link.clone()]);
        let body = Term::tuple([Term::Tag(Tag::Msg4), self.id.host(), email.clone(), ticket, link.clone()]);
        let sealed = sym_encrypt(body, s.key.clone()).expect("session keys are keys");
        out.send(ChannelMsg::new(Channel::Ssl(session), Tag::Msg4, self.id.clone(), s.initiator.clone(), sealed));
        match self.contacts.get(&email) {
            Some(c) => out.send(ChannelMsg::new(Channel::Smtp, Tag::Msg4, self.id.clone(), c.owner.clone(), link)),
            None => out.note(format!("ws: no mailbox for {email}")),
        }
        out
    }

    fn on_link_access(&mut self, link: &Term) -> StepOutput {
        let Some(email) = self
            .regs
            .iter()
            .find(|(_, r)| r.stage == WsStage::AwaitActivation && r.link.as_ref() == Some(link))
            .map(|(e, _)| e.clone())
        else {
            return StepOutput::dropped("ws: access to an unknown or spent link");
        };
        self.regs.get_mut(&email).unwrap().link_accessed = true;
        self.try_forward_ticket(&email)
    }

    fn on_ticket_return(&mut self, body: &Term, claimed: &Term, session: &SessionId) -> StepOutput {
        let Some(p) = body.untuple(6) else {
            return StepOutput::dropped("ws: malformed message 7.2");
        };
        if p[1] != claimed || *p[2] != self.id.host() || !p[5].is_key() {
            return StepOutput::dropped("ws: message 7.2 does not match the session");
        }
        let Some(reg) = self.regs.get_mut(claimed) else {
            return StepOutput::dropped(format!("ws: no registration for {claimed}"));
        };
        if reg.stage != WsStage::AwaitActivation || reg.link.as_ref() != Some(p[4]) {
            return StepOutput::dropped(format!("ws: message 7.2 for {claimed} does not match the issued link"));
        }
        reg.activation = Some((session.clone(), p[3].clone(), p[5].clone()));
        self.try_forward_ticket(claimed)
    }

    /// Steps 7.1 and 7.2 form one logical step: forward only once both arrived.
    fn try_forward_ticket(&mut self, email: &Term) -> StepOutput {
        let reg = self.regs.get_mut(email).expect("caller checked");
        if !reg.link_accessed {
            return StepOutput::default();
        }
        let Some((session, ticket, wrap)) = reg.activation.take() else {
            return StepOutput::default();
        };
        reg.stage = WsStage::AwaitId;
        reg.delivery = Some(session);
        let body = Term::tuple([
            Term::Tag(Tag::Msg6),
            self.id.host(),
            PrincipalId::ra().host(),
            email.clone(),
            ticket,
            wrap,
        ]);
        let mut out = StepOutput::default();
        out.send(self.to_ra(body));
        out
    }

    fn on_identity(&mut self, body: &Term, ssl: &SslRegistry) -> StepOutput {
        let Some(p) = body.untuple(5) else {
            return StepOutput::dropped("ws: malformed message 9");
        };
        if *p[1] != PrincipalId::ra().host() || *p[2] != self.id.host() {
            return StepOutput::dropped("ws: misaddressed message 9");
        }
        let email = p[3].clone();
        let Some(reg) = self.regs.get_mut(&email) else {
            return StepOutput::dropped(format!("ws: identity for unknown registration {email}"));
        };
        if reg.stage != WsStage::AwaitId {
            return StepOutput::dropped(format!("ws: identity for {email} out of order"));
        }
        let session = reg.delivery.clone().expect("set with the stage");
        let Some(s) = ssl.get(&session) else {
            return StepOutput::dropped(format!("ws: delivery session {session} vanished"));
        };
        reg.stage = WsStage::Done;
        let body = Term::tuple([Term::Tag(Tag::Msg10), self.id.host(), email, p[4].clone()]);
        let sealed = sym_encrypt(body, s.key.clone()).expect("session keys are keys");
        let mut out = StepOutput::default();
        out.send(ChannelMsg::new(Channel::Ssl(session), Tag::Msg10, self.id.clone(), s.initiator.clone(), sealed));
        out
    }
}
