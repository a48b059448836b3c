use std::collections::BTreeSet;

use super::{head_tag, Channel, ChannelMsg, EventKind, PrincipalId, StepOutput};
use crate::crypto::{sym_decrypt, sym_encrypt, Tag, Term, TicketError, TicketStore};
use crate::prng::{PrngError, KeyedPrng};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RaState {
    pub id: PrincipalId,
    k_wr: Term,
    k_rc: Term,
    pub tickets: TicketStore,
    /// Emails whose identity request is outstanding at the CA.
    awaiting_identity: BTreeSet<Term>,
    prng: KeyedPrng,
}

impl RaState {
    pub fn new(k_wr: Term, k_rc: Term, prng: KeyedPrng) -> Self {
        RaState {
            id: PrincipalId::ra(),
            k_wr,
            k_rc,
            tickets: TicketStore::default(),
            awaiting_identity: BTreeSet::new(),
            prng,
        }
    }

    fn seal(&self, body: Term, key: &Term, dst: PrincipalId) -> ChannelMsg {
        let tag = head_tag(&body).expect("bodies start with a tag");
        let payload = sym_encrypt(body, key.clone()).expect("backend keys are keys");
        ChannelMsg::new(Channel::Public, tag, self.id.clone(), dst, payload)
    }

    /// Fails only if the nonce generator repeats itself.
    pub fn step(&mut self, msg: &ChannelMsg) -> Result<StepOutput, PrngError> {
        if msg.channel != Channel::Public {
            return Ok(StepOutput::dropped(format!("ra: unexpected {msg}")));
        }
        if let Ok(body) = sym_decrypt(&msg.payload, &self.k_wr) {
            return match head_tag(&body) {
                Some(Tag::Msg2) => self.on_ticket_request(&body),
                Some(Tag::Msg6) => Ok(self.on_redeem(&body)),
                _ => Ok(StepOutput::dropped("ra: unexpected message from ws")),
            };
        }
        if let Ok(body) = sym_decrypt(&msg.payload, &self.k_rc) {
            if head_tag(&body) == Some(Tag::Msg8) {
                return Ok(self.on_identity(&body));
            }
        }
        Ok(StepOutput::dropped("ra: message under no known key"))
    }

    fn on_ticket_request(&mut self, body: &Term) -> Result<StepOutput, PrngError> {
        let Some(p) = body.untuple(4) else {
            return Ok(StepOutput::dropped("ra: malformed message 2"));
        };
        if *p[1] != PrincipalId::ws().host() || *p[2] != self.id.host() {
            return Ok(StepOutput::dropped("ra: misaddressed message 2"));
        }
        let email = p[3].clone();
        if self.tickets.pending_for(&email).is_some() {
            return Ok(StepOutput::dropped(format!("ra: {}", TicketError::PendingRequestExists(email))));
        }
        let nonce = self.prng.generate_nonce(&email.to_string())?;
        let ticket = self.tickets.issue(nonce, &email).expect("checked above").into_term();
        let mut out = StepOutput::default();
        out.emit(EventKind::RASendsTicket, vec![email.clone(), ticket.clone()]);
        let reply = Term::tuple([Term::Tag(Tag::Msg3), self.id.host(), PrincipalId::ws().host(), email, ticket]);
        out.send(self.seal(reply, &self.k_wr, PrincipalId::ws()));
        Ok(out)
    }

    fn on_redeem(&mut self, body: &Term) -> StepOutput {
        let Some(p) = body.untuple(6) else {
            return StepOutput::dropped("ra: malformed message 6");
        };
        if *p[1] != PrincipalId::ws().host() || *p[2] != self.id.host() || !p[5].is_key() {
            return StepOutput::dropped("ra: misaddressed message 6");
        }
        let email = p[3].clone();
        match self.tickets.redeem(&email, p[4]) {
            Ok(()) => {
                self.awaiting_identity.insert(email.clone());
                let req = Term::tuple([Term::Tag(Tag::Msg7), self.id.host(), PrincipalId::ca().host(), email, p[5].clone()]);
                let mut out = StepOutput::default();
                out.send(self.seal(req, &self.k_rc, PrincipalId::ca()));
                out
            }
            Err(TicketError::NoPending(e)) => StepOutput::dropped(format!("ra: replay, no pending ticket for {e}")),
            Err(e) => StepOutput::dropped(format!("ra: ticket-mismatch: {e}")),
        }
    }

    fn on_identity(&mut self, body: &Term) -> StepOutput {
        let Some(p) = body.untuple(5) else {
            return StepOutput::dropped("ra: malformed message 8");
        };
        if *p[1] != PrincipalId::ca().host() || *p[2] != self.id.host() {
            return StepOutput::dropped("ra: misaddressed message 8");
        }
        let email = p[3].clone();
        if !self.awaiting_identity.remove(&email) {
            return StepOutput::dropped(format!("ra: no identity outstanding for {email}"));
        }
        let fwd = Term::tuple([Term::Tag(Tag::Msg9), self.id.host(), PrincipalId::ws().host(), email, p[4].clone()]);
        let mut out = StepOutput::default();
        out.send(self.seal(fwd, &self.k_wr, PrincipalId::ws()));
        out
    }
}
