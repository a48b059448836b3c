//! Registration tickets: `Hash(Pair(nonce, email))`, single use.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::{Term, NONCE_LABEL};
use crate::prng::Nonce;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TicketError {
    #[error("a ticket for {0} is already pending")]
    PendingRequestExists(Term),
    #[error("presented ticket does not match the one issued to {0}")]
    Mismatch(Term),
    #[error("no pending ticket for {0}")]
    NoPending(Term),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Ticket(Term);

impl Ticket {
    pub fn term(&self) -> &Term {
        &self.0
    }

    pub fn into_term(self) -> Term {
        self.0
    }
}

/// The nonce as a symbolic name.
pub fn nonce_term(nonce: Nonce) -> Term {
    Term::name(NONCE_LABEL, nonce.0)
}

pub fn make_ticket(nonce: Nonce, email: &Term) -> Ticket {
    Ticket(Term::hash(Term::pair(nonce_term(nonce), email.clone())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PendingTicket {
    nonce: Nonce,
    ticket: Ticket,
}

/// The RA's pending store: at most one unredeemed ticket per email.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TicketStore {
    pending: BTreeMap<Term, PendingTicket>,
}

impl std::hash::Hash for TicketStore {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for (email, p) in &self.pending {
            email.hash(state);
            p.nonce.hash(state);
        }
    }
}

impl TicketStore {
    /// Binds a fresh nonce to `email`, refusing if a ticket is already pending.
    pub fn issue(&mut self, nonce: Nonce, email: &Term) -> Result<Ticket, TicketError> {
        if self.pending.contains_key(email) {
            return Err(TicketError::PendingRequestExists(email.clone()));
        }
        let ticket = make_ticket(nonce, email);
        self.pending.insert(email.clone(), PendingTicket { nonce, ticket: ticket.clone() });
        Ok(ticket)
    }

    /// Checks `presented` against the pending ticket and deletes it on success.
    pub fn redeem(&mut self, email: &Term, presented: &Term) -> Result<(), TicketError> {
        match self.pending.get(email) {
            None => Err(TicketError::NoPending(email.clone())),
            Some(p) if p.ticket.term() != presented => Err(TicketError::Mismatch(email.clone())),
            Some(_) => {
                self.pending.remove(email);
                Ok(())
            }
        }
    }

    pub fn pending_for(&self, email: &Term) -> Option<&Ticket> {
        self.pending.get(email).map(|p| &p.ticket)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}
