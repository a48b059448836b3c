use std::collections::BTreeMap;

use super::{head_tag, Channel, ChannelMsg, EventKind, PrincipalId, StepOutput};
use crate::crypto::{id_encrypt, sym_decrypt, sym_encrypt, Tag, Term};

/// Label prefix of issued identities.
pub const ID_LABEL_PREFIX: &str = "id/";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CaState {
    pub id: PrincipalId,
    k_rc: Term,
    issued: BTreeMap<Term, u32>,
}

impl CaState {
    pub fn new(k_rc: Term) -> Self {
        CaState { id: PrincipalId::ca(), k_rc, issued: BTreeMap::new() }
    }

    pub fn issued_count(&self) -> u32 {
        self.issued.values().sum()
    }

    pub fn step(&mut self, msg: &ChannelMsg) -> StepOutput {
        if msg.channel != Channel::Public {
            return StepOutput::dropped(format!("ca: unexpected {msg}"));
        }
        let Ok(body) = sym_decrypt(&msg.payload, &self.k_rc) else {
            return StepOutput::dropped("ca: message not under k_rc");
        };
        let p = match body.untuple(5) {
            Some(p) if head_tag(&body) == Some(Tag::Msg7) => p,
            _ => return StepOutput::dropped("ca: malformed message 7"),
        };
        if *p[1] != PrincipalId::ra().host() || *p[2] != self.id.host() || !p[4].is_key() {
            return StepOutput::dropped("ca: misaddressed message 7");
        }
        let email = p[3].clone();
        let count = self.issued.entry(email.clone()).or_insert(0);
        *count += 1;
        let identity = Term::name(format!("{ID_LABEL_PREFIX}{}", email.label().unwrap_or("?")), *count as u128);
        let eid = id_encrypt(identity.clone(), p[4].clone()).expect("checked is_key");
        let mut out = StepOutput::default();
        out.emit(EventKind::CASendsId, vec![email.clone(), identity]);
        let reply = Term::tuple([Term::Tag(Tag::Msg8), self.id.host(), PrincipalId::ra().host(), email, eid]);
        let sealed = sym_encrypt(reply, self.k_rc.clone()).expect("k_rc is a key");
        out.send(ChannelMsg::new(Channel::Public, Tag::Msg8, self.id.clone(), PrincipalId::ra(), sealed));
        out
    }
}
