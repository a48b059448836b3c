use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{attacker_choices, AttackContext, AttackerAction, Knowledge, OwnSession, DEFAULT_DEPTH};
use crate::crypto::{parse_term, Tag, Term};
use crate::prng::PrngError;
use crate::protocol::{
    flow_label, Channel, ChannelMsg, Event, PrincipalId, Role, Scenario, ScenarioError, StepOutput, System, Variant,
};

/// One scheduler step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// The named user starts registering.
    Start { user: String },
    /// An in-flight message reaches its addressee.
    Deliver { msg: ChannelMsg },
    Block { msg: ChannelMsg },
    Observe { msg: ChannelMsg },
    Inject { msg: ChannelMsg },
    SslBypass { claim: Term },
}

impl From<AttackerAction> for Action {
    fn from(a: AttackerAction) -> Self {
        match a {
            AttackerAction::Observe { msg } => Action::Observe { msg },
            AttackerAction::Block { msg } => Action::Block { msg },
            AttackerAction::Inject { msg } => Action::Inject { msg },
            AttackerAction::SslBypass { claim } => Action::SslBypass { claim },
            AttackerAction::Deliver { msg } => Action::Deliver { msg },
        }
    }
}

impl Action {
    pub fn is_attacker_move(&self) -> bool {
        !matches!(self, Action::Start { .. } | Action::Deliver { .. })
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Prng(#[from] PrngError),
}

/// An event with its position in the trace-wide event order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedEvent {
    pub seq: usize,
    #[serde(flatten)]
    pub event: Event,
}

/// What one scheduler step did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub actor: PrincipalId,
    #[serde(flatten)]
    pub action: Action,
    /// Position of the handled message in the protocol's sequence diagram.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<RecordedEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sent: Vec<ChannelMsg>,
    /// Terms added to the attacker's knowledge base by this step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learned: Vec<Term>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Limits on the moves offered to a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveBounds {
    pub max_sessions: usize,
    pub attacker: bool,
    pub max_bypass: usize,
    /// Replays with an effect allowed per run.
    pub max_replays: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct AttackerSetup {
    id: PrincipalId,
    email: Term,
    wrap_key: Term,
}

/// The global state: honest principals, the network, and the attacker.
///
/// Equality and hashing see the event history as a multiset. Once a history
/// satisfies every correspondence, whether a future extension does depends
/// only on how many matching antecedents each binding has, not on their order.
/// They skip the attacker's knowledge: it is fixed by the scenario, the
/// observed messages and the bypass keys held in the SSL registry.
#[derive(Debug, Clone)]
pub struct World {
    system: System,
    /// In-flight messages, kept sorted.
    pool: Vec<ChannelMsg>,
    attacker: Option<AttackerSetup>,
    // Shared between clones until one of them learns something.
    knowledge: Arc<Knowledge>,
    observed: Arc<BTreeSet<ChannelMsg>>,
    replayed: BTreeSet<ChannelMsg>,
    history: BTreeMap<Event, u32>,
    events_emitted: usize,
    steps: usize,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.system == other.system
            && self.pool == other.pool
            && self.observed == other.observed
            && self.replayed == other.replayed
            && self.history == other.history
    }
}

impl Eq for World {}

impl std::hash::Hash for World {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.system.hash(state);
        self.pool.hash(state);
        self.observed.hash(state);
        self.replayed.hash(state);
        self.history.hash(state);
    }
}

/// Terms every attacker knows: tags, principal names, its own key material,
/// every user's email, plus what the scenario declares compromised.
pub fn initial_knowledge(scenario: &Scenario) -> Result<Vec<Term>, ScenarioError> {
    let mut terms: Vec<Term> = Tag::ALL.iter().map(|t| Term::Tag(*t)).collect();
    for p in [PrincipalId::ws(), PrincipalId::ra(), PrincipalId::ca()] {
        terms.push(p.host());
    }
    for u in &scenario.users {
        terms.push(PrincipalId::new(Role::User, u.name.as_str()).host());
        terms.push(Scenario::email_term(&u.email));
    }
    let a = &scenario.attacker;
    terms.push(PrincipalId::new(Role::Attacker, a.name.as_str()).host());
    terms.push(Scenario::email_term(&a.email));
    terms.push(attacker_wrap_key(&a.name));
    for t in &a.knows {
        terms.push(parse_term(t)?);
    }
    Ok(terms)
}

fn attacker_wrap_key(name: &str) -> Term {
    Term::key(format!("k/{name}"), 1)
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        let system = System::new(scenario)?;
        let attacker = scenario.attacker.enabled.then(|| AttackerSetup {
            id: PrincipalId::new(Role::Attacker, scenario.attacker.name.as_str()),
            email: Scenario::email_term(&scenario.attacker.email),
            wrap_key: attacker_wrap_key(&scenario.attacker.name),
        });
        let knowledge = if attacker.is_some() {
            Knowledge::from_terms(initial_knowledge(scenario)?, DEFAULT_DEPTH)
        } else {
            Knowledge::new(DEFAULT_DEPTH)
        };
        Ok(World {
            system,
            pool: Vec::new(),
            attacker,
            knowledge: Arc::new(knowledge),
            observed: Arc::default(),
            replayed: BTreeSet::new(),
            history: BTreeMap::new(),
            events_emitted: 0,
            steps: 0,
        })
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn variant(&self) -> Variant {
        self.system.variant
    }

    pub fn pool(&self) -> &[ChannelMsg] {
        &self.pool
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn attacker_enabled(&self) -> bool {
        self.attacker.is_some()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn started_users(&self) -> usize {
        (0..self.system.user_count()).filter(|&i| self.system.user_started(i)).count()
    }

    fn own_sessions(&self) -> Vec<OwnSession> {
        let Some(a) = &self.attacker else { return Vec::new() };
        self.system
            .ssl
            .sessions()
            .filter(|s| s.initiator == a.id)
            .map(|s| OwnSession { id: s.id.clone(), claimed: s.claimed.clone(), key: s.key.clone() })
            .collect()
    }

    /// Every attacker move available now, in the attacker module's order.
    pub fn attacker_moves(&self, allow_bypass: bool, allow_replay: bool) -> Vec<AttackerAction> {
        let Some(a) = &self.attacker else { return Vec::new() };
        let sessions = self.own_sessions();
        let ctx = AttackContext {
            variant: self.variant(),
            attacker: &a.id,
            wrap_key: &a.wrap_key,
            sessions: &sessions,
            own_email: &a.email,
            observed: &self.observed,
            replayed: &self.replayed,
            allow_bypass,
            allow_replay,
        };
        attacker_choices(&self.knowledge, &self.pool, &ctx)
    }

    /// Moves a search explores. Blocking and observing are left out: an
    /// undelivered message is the same as a blocked one within a bounded run,
    /// and every visible message is observed on sending.
    pub fn moves(&self, bounds: &MoveBounds) -> Vec<Action> {
        let mut out = Vec::new();
        if self.started_users() < bounds.max_sessions {
            for i in 0..self.system.user_count() {
                if !self.system.user_started(i) {
                    out.push(Action::Start { user: self.system.user_id(i).unwrap().label.to_string() });
                }
            }
        }
        let mut last: Option<&ChannelMsg> = None;
        for msg in &self.pool {
            if last != Some(msg) {
                out.push(Action::Deliver { msg: msg.clone() });
            }
            last = Some(msg);
        }
        if bounds.attacker && self.attacker.is_some() {
            let bypass = self.own_sessions().len() < bounds.max_bypass;
            let replay = self.replayed.len() < bounds.max_replays;
            for m in self.attacker_moves(bypass, replay) {
                match m {
                    AttackerAction::Inject { .. } | AttackerAction::SslBypass { .. } => out.push(m.into()),
                    _ => {}
                }
            }
        }
        out
    }

    fn require_attacker(&self) -> Result<&AttackerSetup, StepError> {
        self.attacker.as_ref().ok_or_else(|| StepError::Invalid("the scenario has no attacker".into()))
    }

    fn take_from_pool(&mut self, msg: &ChannelMsg) -> Result<(), StepError> {
        match self.pool.binary_search(msg) {
            Ok(i) => {
                self.pool.remove(i);
                Ok(())
            }
            Err(_) => Err(StepError::Invalid(format!("{msg} is not in flight"))),
        }
    }

    fn learn(&mut self, t: Term, step: &mut TraceStep) {
        if self.attacker.is_some() && Arc::make_mut(&mut self.knowledge).learn(t.clone()) {
            step.learned.push(t);
        }
    }

    fn absorb(&mut self, out: StepOutput, step: &mut TraceStep) {
        for e in out.events {
            *self.history.entry(e.clone()).or_insert(0) += 1;
            step.events.push(RecordedEvent { seq: self.events_emitted, event: e });
            self.events_emitted += 1;
        }
        for k in out.published {
            self.learn(k, step);
        }
        step.notes.extend(out.notes);
        for msg in out.outbound {
            if msg.channel.is_observable() && self.attacker.is_some() {
                Arc::make_mut(&mut self.observed).insert(msg.clone());
                self.learn(msg.payload.clone(), step);
            }
            if self.system.has_principal(&msg.dst) {
                let i = self.pool.binary_search(&msg).unwrap_or_else(|i| i);
                self.pool.insert(i, msg.clone());
            } else if msg.dst.role != Role::Attacker {
                step.notes.push(format!("undeliverable: {msg}"));
            }
            step.sent.push(msg);
        }
    }

    /// Executes one action, or explains why it is not available.
    pub fn apply(&mut self, action: &Action) -> Result<TraceStep, StepError> {
        let variant = self.variant();
        let mut step = TraceStep {
            index: self.steps,
            actor: PrincipalId::ws(),
            action: action.clone(),
            flow: None,
            events: Vec::new(),
            sent: Vec::new(),
            learned: Vec::new(),
            notes: Vec::new(),
        };
        match action {
            Action::Start { user } => {
                let i = self
                    .system
                    .user_index(user)
                    .ok_or_else(|| StepError::Invalid(format!("no user named '{user}'")))?;
                if self.system.user_started(i) {
                    return Err(StepError::Invalid(format!("user '{user}' already started")));
                }
                step.actor = self.system.user_id(i).unwrap().clone();
                let out = self.system.start(i).expect("index checked");
                self.absorb(out, &mut step);
            }
            Action::Deliver { msg } => {
                self.take_from_pool(msg)?;
                step.actor = msg.dst.clone();
                step.flow = flow_label(msg, variant).map(str::to_string);
                let out = self.system.deliver(msg)?;
                self.absorb(out, &mut step);
            }
            Action::Block { msg } | Action::Observe { msg } => {
                step.actor = self.require_attacker()?.id.clone();
                if !msg.channel.is_observable() {
                    return Err(StepError::Invalid(format!("{msg} travels on a private channel")));
                }
                if matches!(action, Action::Block { .. }) {
                    self.take_from_pool(msg)?;
                    step.notes.push(format!("blocked {msg}"));
                } else {
                    if self.pool.binary_search(msg).is_err() {
                        return Err(StepError::Invalid(format!("{msg} is not in flight")));
                    }
                    Arc::make_mut(&mut self.observed).insert(msg.clone());
                    self.learn(msg.payload.clone(), &mut step);
                }
            }
            Action::Inject { msg } => {
                step.actor = self.require_attacker()?.id.clone();
                if msg.channel == Channel::Sms {
                    return Err(StepError::Invalid("the SMS channel is not injectable".into()));
                }
                if !self.system.has_principal(&msg.dst) {
                    return Err(StepError::Invalid(format!("no honest principal {}", msg.dst)));
                }
                if !self.knowledge.can_derive(&msg.payload) {
                    return Err(StepError::Invalid(format!("attacker cannot derive the payload of {msg}")));
                }
                // A replay is spent only if it changed something; a dropped
                // one leaves the state as it was.
                let before = self.observed.contains(msg).then(|| self.system.clone());
                step.flow = flow_label(msg, variant).map(str::to_string);
                let out = self.system.deliver(msg)?;
                if before.is_some_and(|b| b != self.system) {
                    self.replayed.insert(msg.clone());
                }
                self.absorb(out, &mut step);
            }
            Action::SslBypass { claim } => {
                let id = self.require_attacker()?.id.clone();
                step.actor = id.clone();
                if !self.knowledge.can_derive(claim) {
                    return Err(StepError::Invalid(format!("attacker cannot derive the claimed identity {claim}")));
                }
                let n = self
                    .system
                    .ssl_bypass(&id, claim.clone())
                    .ok_or_else(|| StepError::Invalid(format!("{variant} has no SSL sessions")))?;
                step.notes.push(format!("bypass session {} claiming {claim}", n.session));
                self.learn(n.key, &mut step);
            }
        }
        self.steps += 1;
        Ok(step)
    }
}
