//! Secrecy and correspondence properties evaluated over concrete traces.

mod matching;
mod pattern;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::Knowledge;
use crate::crypto::{ParseError, Term};
use crate::harness::Trace;
use crate::protocol::{Event, EventKind, Variant};

pub use matching::{hopcroft_karp, Matching};
pub use pattern::{ArgPattern, EventPattern, TermPattern};

/// One antecedent of a correspondence, injective or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Antecedent {
    pub pattern: EventPattern,
    pub injective: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyKind {
    /// No term matching the pattern is ever derivable by the attacker.
    Secrecy(TermPattern),
    /// Every consequent event is preceded by matching antecedent events. With
    /// `injective`, distinct consequents need distinct occurrences of every
    /// injective antecedent.
    Correspondence { consequent: EventPattern, injective: bool, antecedents: Vec<Antecedent> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Property {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated {
        /// Sequence number of the offending consequent event, for correspondences.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        event: Option<usize>,
        /// The leaked term, for secrecy.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        term: Option<Term>,
        reason: String,
    },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => f.write_str("holds"),
            Verdict::Violated { reason, .. } => write!(f, "violated: {reason}"),
        }
    }
}

impl Property {
    pub fn secrecy(name: impl Into<String>, pattern: TermPattern) -> Self {
        Property { name: name.into(), kind: PropertyKind::Secrecy(pattern) }
    }

    pub fn correspondence(
        name: impl Into<String>,
        consequent: EventPattern,
        injective: bool,
        antecedents: Vec<Antecedent>,
    ) -> Self {
        Property { name: name.into(), kind: PropertyKind::Correspondence { consequent, injective, antecedents } }
    }

    pub fn is_secrecy(&self) -> bool {
        matches!(self.kind, PropertyKind::Secrecy(_))
    }

    /// Evaluates the property against an event sequence (index = sequence
    /// number) and the attacker's final knowledge.
    pub fn evaluate(&self, events: &[Event], knowledge: &Knowledge) -> Verdict {
        match &self.kind {
            PropertyKind::Secrecy(p) => secrecy_verdict(knowledge, p),
            PropertyKind::Correspondence { consequent, injective, antecedents } => {
                correspondence_verdict(events, consequent, *injective, antecedents)
            }
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PropertyKind::Secrecy(p) => write!(f, "{}: secret {p}", self.name),
            PropertyKind::Correspondence { consequent, injective, antecedents } => {
                write!(f, "{}: {}{consequent} ==> ", self.name, if *injective { "inj " } else { "" })?;
                for (i, a) in antecedents.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" && ")?;
                    }
                    write!(f, "{}{}", if a.injective { "inj " } else { "" }, a.pattern)?;
                }
                Ok(())
            }
        }
    }
}

/// Secrecy over a trace: the attacker's final knowledge is the union of all
/// snapshots, since knowledge only grows.
pub fn check_secrecy(trace: &Trace, pattern: &TermPattern) -> Verdict {
    secrecy_verdict(&trace.final_knowledge(), pattern)
}

pub fn secrecy_verdict(knowledge: &Knowledge, pattern: &TermPattern) -> Verdict {
    match pattern.find_derivable(knowledge) {
        None => Verdict::Holds,
        Some(t) => Verdict::Violated { event: None, reason: format!("attacker derives {t}"), term: Some(t) },
    }
}

pub fn check_correspondence(trace: &Trace, property: &Property) -> Verdict {
    match &property.kind {
        PropertyKind::Correspondence { consequent, injective, antecedents } => {
            correspondence_verdict(&trace.events(), consequent, *injective, antecedents)
        }
        PropertyKind::Secrecy(_) => Verdict::Holds,
    }
}

/// Evaluates any property over a trace.
pub fn check(trace: &Trace, property: &Property) -> Verdict {
    match &property.kind {
        PropertyKind::Secrecy(p) => check_secrecy(trace, p),
        PropertyKind::Correspondence { .. } => check_correspondence(trace, property),
    }
}

pub fn correspondence_verdict(
    events: &[Event],
    consequent: &EventPattern,
    injective: bool,
    antecedents: &[Antecedent],
) -> Verdict {
    let consequents: Vec<(usize, BTreeMap<String, Term>)> = events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| consequent.bind(e, &BTreeMap::new()).map(|b| (i, b)))
        .collect();
    for ante in antecedents {
        let candidates: Vec<Vec<usize>> = consequents
            .iter()
            .map(|(j, env)| (0..*j).filter(|&i| ante.pattern.bind(&events[i], env).is_some()).collect())
            .collect();
        if let Some(pos) = candidates.iter().position(Vec::is_empty) {
            let j = consequents[pos].0;
            return Verdict::Violated {
                event: Some(j),
                term: None,
                reason: format!("{} at #{j} has no preceding {}", events[j], ante.pattern),
            };
        }
        if injective && ante.injective {
            let m = hopcroft_karp(consequents.len(), events.len(), &candidates);
            if m.size < consequents.len() {
                let pos = m.left.iter().position(Option::is_none).expect("matching is not perfect");
                let j = consequents[pos].0;
                return Verdict::Violated {
                    event: Some(j),
                    term: None,
                    reason: format!(
                        "{} at #{j} shares its {} with another occurrence ({} of {} matched)",
                        events[j],
                        ante.pattern,
                        m.size,
                        consequents.len()
                    ),
                };
            }
        }
    }
    Verdict::Holds
}

fn ev(kind: EventKind, args: &[&str]) -> EventPattern {
    EventPattern::new(kind, args.iter().map(|a| ArgPattern::parse(a).expect("builtin pattern")).collect())
}

fn inj(p: EventPattern) -> Antecedent {
    Antecedent { pattern: p, injective: true }
}

fn plain(p: EventPattern) -> Antecedent {
    Antecedent { pattern: p, injective: false }
}

/// Name of the diagnostic query that is expected to fail.
pub const DIAGNOSTIC_PROPERTY: &str = "sms-requires-request";

/// The protocol's query block. `diagnostic` adds the query that is known not
/// to hold: an SMS may be sent without the user having asked for it.
pub fn builtin_properties(variant: Variant, diagnostic: bool) -> Vec<Property> {
    use EventKind::*;
    let mut props = Vec::new();
    match variant {
        Variant::Ebia => {
            props.push(Property::correspondence(
                "activation-requires-user-receipt",
                ev(CASendsId, &["h", "id"]),
                true,
                vec![inj(ev(UserReceivesRegistrationData, &["h", "_", "_"]))],
            ));
        }
        Variant::ChatSrp | Variant::ChatSrpNoSms => {
            props.push(Property::secrecy("id-secrecy", TermPattern::identity()));
            props.push(Property::secrecy("id-enc-secrecy", TermPattern::IdEnc(Box::new(TermPattern::identity()), Box::new(TermPattern::Any))));
            props.push(Property::correspondence(
                "issue-requires-request",
                ev(CASendsId, &["h", "id"]),
                true,
                vec![plain(ev(UserRequestsRegistration, &["h"]))],
            ));
            props.push(Property::correspondence(
                "receipt-requires-issue",
                ev(UserReceivesId, &["h", "id"]),
                true,
                vec![inj(ev(CASendsId, &["h", "id"]))],
            ));
            props.push(Property::correspondence(
                "sms-processing-authentic",
                ev(UserProcessesSMS, &["h", "c"]),
                true,
                vec![inj(ev(WSSendsSMS, &["h", "c"])), inj(ev(UserRequestsRegistration, &["h"]))],
            ));
            props.push(Property::correspondence(
                "registration-data-authentic",
                ev(UserReceivesRegistrationData, &["h", "t", "l"]),
                true,
                vec![inj(ev(WSSendsLink, &["h", "l"])), inj(ev(RASendsTicket, &["h", "t"]))],
            ));
            if diagnostic {
                props.push(Property::correspondence(
                    DIAGNOSTIC_PROPERTY,
                    ev(WSSendsSMS, &["h", "c"]),
                    true,
                    vec![inj(ev(UserRequestsRegistration, &["h"]))],
                ));
            }
        }
    }
    props
}

#[derive(Debug, Error)]
pub enum PropertyFileError {
    #[error("property file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("property '{name}': {source}")]
    Pattern { name: String, source: ParseError },
    #[error("property '{name}': unknown event '{event}'")]
    UnknownEvent { name: String, event: String },
    #[error("property '{name}': {event} takes {expected} argument(s), got {got}")]
    Arity { name: String, event: String, expected: usize, got: usize },
    #[error("property '{name}': give either 'secret' or 'consequent'")]
    Shape { name: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    event: String,
    args: Vec<String>,
    #[serde(default = "yes")]
    injective: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProperty {
    name: String,
    #[serde(default)]
    secret: Option<String>,
    #[serde(default)]
    consequent: Option<RawEvent>,
    #[serde(default)]
    antecedents: Vec<RawEvent>,
}

/// Parses a JSON list of properties.
///
/// ```json
/// [{"name": "ids", "secret": "(name-prefix \"id/\")"},
///  {"name": "issue", "consequent": {"event": "CASendsId", "args": ["h", "_"]},
///   "antecedents": [{"event": "UserRequestsRegistration", "args": ["h"], "injective": false}]}]
/// ```
///
/// Event arguments are `_`, a variable name, or a quoted s-expression term.
pub fn parse_properties(text: &str) -> Result<Vec<Property>, PropertyFileError> {
    let raw: Vec<RawProperty> = serde_json::from_str(text)?;
    raw.into_iter().map(convert).collect()
}

fn convert_event(name: &str, raw: &RawEvent) -> Result<EventPattern, PropertyFileError> {
    let kind = EventKind::from_name(&raw.event)
        .ok_or_else(|| PropertyFileError::UnknownEvent { name: name.into(), event: raw.event.clone() })?;
    if raw.args.len() != kind.arity() {
        return Err(PropertyFileError::Arity {
            name: name.into(),
            event: raw.event.clone(),
            expected: kind.arity(),
            got: raw.args.len(),
        });
    }
    let args = raw
        .args
        .iter()
        .map(|a| ArgPattern::parse(a))
        .collect::<Result<_, _>>()
        .map_err(|source| PropertyFileError::Pattern { name: name.into(), source })?;
    Ok(EventPattern::new(kind, args))
}

fn convert(raw: RawProperty) -> Result<Property, PropertyFileError> {
    match (&raw.secret, &raw.consequent) {
        (Some(s), None) if raw.antecedents.is_empty() => {
            let p = TermPattern::parse(s).map_err(|source| PropertyFileError::Pattern { name: raw.name.clone(), source })?;
            Ok(Property::secrecy(raw.name, p))
        }
        (None, Some(c)) => {
            let consequent = convert_event(&raw.name, c)?;
            let antecedents = raw
                .antecedents
                .iter()
                .map(|a| Ok(Antecedent { pattern: convert_event(&raw.name, a)?, injective: a.injective }))
                .collect::<Result<_, PropertyFileError>>()?;
            Ok(Property::correspondence(raw.name, consequent, c.injective, antecedents))
        }
        _ => Err(PropertyFileError::Shape { name: raw.name }),
    }
}
