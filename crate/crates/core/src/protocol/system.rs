use std::collections::BTreeMap;

use super::ws::Contact;
use super::{
    ssl_negotiate, CaState, ChannelMsg, EbiaServerState, EbiaUserState, Input, Negotiated, PrincipalId, RaState, Role,
    Scenario, ScenarioError, SslRegistry, StepOutput, UserState, Variant, WsState,
};
use crate::crypto::Term;
use crate::prng::{derive_seed, KeyedPrng, PrngError};

const WS_STREAM: u64 = 1;
const RA_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Principals {
    ChatSrp { users: Vec<UserState>, ws: WsState, ra: RaState, ca: CaState },
    Ebia { users: Vec<EbiaUserState>, server: EbiaServerState },
}

/// Every honest principal of one system instance plus the private SSL registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct System {
    pub variant: Variant,
    pub principals: Principals,
    pub ssl: SslRegistry,
}

impl System {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let seed = scenario.seed_value()?;
        let param = scenario.param_value()?;
        let user_ids: Vec<(PrincipalId, Term)> = scenario
            .users
            .iter()
            .map(|u| (PrincipalId::new(Role::User, u.name.as_str()), Scenario::email_term(&u.email)))
            .collect();

        let mut contacts: BTreeMap<Term, Contact> = BTreeMap::new();
        for (id, email) in &user_ids {
            contacts.insert(email.clone(), Contact { owner: id.clone(), phone: None });
        }
        let attacker = PrincipalId::new(Role::Attacker, scenario.attacker.name.as_str());
        contacts.insert(Scenario::email_term(&scenario.attacker.email), Contact { owner: attacker, phone: None });

        let principals = match scenario.variant {
            Variant::Ebia => Principals::Ebia {
                users: user_ids.into_iter().map(|(id, email)| EbiaUserState::new(id, email)).collect(),
                server: EbiaServerState::new(contacts),
            },
            Variant::ChatSrp | Variant::ChatSrpNoSms => {
                let handsets: BTreeMap<&str, &str> = scenario
                    .users
                    .iter()
                    .filter_map(|u| u.phone.as_deref().map(|p| (p, u.name.as_str())))
                    .collect();
                for (email, phone) in scenario.phone_directory() {
                    let handset = match handsets.get(phone.as_str()) {
                        Some(name) => PrincipalId::new(Role::User, *name),
                        None => PrincipalId::new(Role::User, format!("tel:{phone}")),
                    };
                    let entry = contacts
                        .entry(Scenario::email_term(&email))
                        .or_insert_with(|| Contact { owner: PrincipalId::new(Role::User, format!("mail:{email}")), phone: None });
                    entry.phone = Some((phone, handset));
                }
                let k_wr = Term::key("k_wr", 0);
                let k_rc = Term::key("k_rc", 0);
                Principals::ChatSrp {
                    users: user_ids.into_iter().map(|(id, email)| UserState::new(id, email)).collect(),
                    ws: WsState::new(k_wr.clone(), contacts, KeyedPrng::new(derive_seed(seed, WS_STREAM), param)?),
                    ra: RaState::new(k_wr, k_rc.clone(), KeyedPrng::new(derive_seed(seed, RA_STREAM), param)?),
                    ca: CaState::new(k_rc),
                }
            }
        };
        Ok(System { variant: scenario.variant, principals, ssl: SslRegistry::default() })
    }

    pub fn user_count(&self) -> usize {
        match &self.principals {
            Principals::ChatSrp { users, .. } => users.len(),
            Principals::Ebia { users, .. } => users.len(),
        }
    }

    pub fn user_id(&self, index: usize) -> Option<&PrincipalId> {
        match &self.principals {
            Principals::ChatSrp { users, .. } => users.get(index).map(|u| &u.id),
            Principals::Ebia { users, .. } => users.get(index).map(|u| &u.id),
        }
    }

    pub fn user_email(&self, index: usize) -> Option<&Term> {
        match &self.principals {
            Principals::ChatSrp { users, .. } => users.get(index).map(|u| &u.email),
            Principals::Ebia { users, .. } => users.get(index).map(|u| &u.email),
        }
    }

    /// Is there an honest principal that would accept messages addressed to `id`?
    pub fn has_principal(&self, id: &PrincipalId) -> bool {
        match id.role {
            Role::User => (0..self.user_count()).any(|i| self.user_id(i) == Some(id)),
            Role::Ws => true,
            Role::Ra | Role::Ca => matches!(self.principals, Principals::ChatSrp { .. }),
            Role::Attacker => false,
        }
    }

    /// Index of the user with this label.
    pub fn user_index(&self, label: &str) -> Option<usize> {
        (0..self.user_count()).find(|&i| self.user_id(i).is_some_and(|u| &*u.label == label))
    }

    /// Has the user with this index been started?
    pub fn user_started(&self, index: usize) -> bool {
        match &self.principals {
            Principals::ChatSrp { users, .. } => users.get(index).is_some_and(|u| u.stage != super::UserStage::Idle),
            Principals::Ebia { users, .. } => {
                users.get(index).is_some_and(|u| u.stage != super::ebia::EbiaUserStage::Idle)
            }
        }
    }

    /// Kicks off the registration of user `index`. `None` if there is no such user.
    pub fn start(&mut self, index: usize) -> Option<StepOutput> {
        let variant = self.variant;
        match &mut self.principals {
            Principals::ChatSrp { users, .. } => {
                users.get_mut(index).map(|u| u.step(Input::Start, variant, &mut self.ssl))
            }
            Principals::Ebia { users, .. } => users.get_mut(index).map(|u| u.step(Input::Start)),
        }
    }

    /// Hands `msg` to its addressee.
    pub fn deliver(&mut self, msg: &ChannelMsg) -> Result<StepOutput, PrngError> {
        let variant = self.variant;
        let out = match &mut self.principals {
            Principals::ChatSrp { users, ws, ra, ca } => match msg.dst.role {
                Role::User => match users.iter_mut().find(|u| u.id == msg.dst) {
                    Some(u) => u.step(Input::Msg(msg), variant, &mut self.ssl),
                    None => StepOutput::dropped(format!("no principal {}", msg.dst)),
                },
                Role::Ws => ws.step(msg, variant, &self.ssl),
                Role::Ra => ra.step(msg)?,
                Role::Ca => ca.step(msg),
                Role::Attacker => StepOutput::dropped("addressed to the attacker"),
            },
            Principals::Ebia { users, server } => match msg.dst.role {
                Role::User => match users.iter_mut().find(|u| u.id == msg.dst) {
                    Some(u) => u.step(Input::Msg(msg)),
                    None => StepOutput::dropped(format!("no principal {}", msg.dst)),
                },
                Role::Ws => server.step(msg),
                _ => StepOutput::dropped(format!("no principal {}", msg.dst)),
            },
        };
        Ok(out)
    }

    /// Attacker-initiated SSL negotiation with the WS. Not available in EBIA,
    /// which has no SSL sessions.
    pub fn ssl_bypass(&mut self, attacker: &PrincipalId, claimed: Term) -> Option<Negotiated> {
        match self.principals {
            Principals::ChatSrp { .. } => Some(ssl_negotiate(&mut self.ssl, attacker, claimed)),
            Principals::Ebia { .. } => None,
        }
    }

    pub fn ws(&self) -> Option<&WsState> {
        match &self.principals {
            Principals::ChatSrp { ws, .. } => Some(ws),
            _ => None,
        }
    }

    pub fn ra(&self) -> Option<&RaState> {
        match &self.principals {
            Principals::ChatSrp { ra, .. } => Some(ra),
            _ => None,
        }
    }

    pub fn ca(&self) -> Option<&CaState> {
        match &self.principals {
            Principals::ChatSrp { ca, .. } => Some(ca),
            _ => None,
        }
    }

    pub fn chatsrp_users(&self) -> &[UserState] {
        match &self.principals {
            Principals::ChatSrp { users, .. } => users,
            _ => &[],
        }
    }

    pub fn ebia_server(&self) -> Option<&EbiaServerState> {
        match &self.principals {
            Principals::Ebia { server, .. } => Some(server),
            _ => None,
        }
    }
}
