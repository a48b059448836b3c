use serde::{Deserialize, Serialize};

use super::world::{Action, TraceStep};
use crate::adversary::{Knowledge, DEFAULT_DEPTH};
use crate::crypto::Term;
use crate::protocol::{Event, Scenario};
use crate::verifier::{check, Property, Verdict};

/// Version tag written into every trace file.
pub const TRACE_SCHEMA: &str = "chatsrp-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedVerdict {
    pub property: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// A recorded execution. `initial_knowledge` plus the `learned` deltas of the
/// steps give the attacker's knowledge after every step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub schema: String,
    pub scenario: Scenario,
    pub initial_knowledge: Vec<Term>,
    pub steps: Vec<TraceStep>,
    #[serde(default)]
    pub verdicts: Vec<NamedVerdict>,
}

impl Trace {
    pub fn new(scenario: Scenario, initial_knowledge: Vec<Term>) -> Self {
        Trace { schema: TRACE_SCHEMA.into(), scenario, initial_knowledge, steps: Vec::new(), verdicts: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The action list that reproduces this trace.
    pub fn schedule(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action.clone()).collect()
    }

    /// All events in emission order; the index is the sequence number.
    pub fn events(&self) -> Vec<Event> {
        self.steps.iter().flat_map(|s| s.events.iter().map(|r| r.event.clone())).collect()
    }

    /// Knowledge after the first `steps` steps.
    pub fn knowledge_after(&self, steps: usize) -> Knowledge {
        let mut k = Knowledge::from_terms(self.initial_knowledge.iter().cloned(), DEFAULT_DEPTH);
        for s in self.steps.iter().take(steps) {
            for t in &s.learned {
                k.learn(t.clone());
            }
        }
        k
    }

    pub fn final_knowledge(&self) -> Knowledge {
        self.knowledge_after(self.steps.len())
    }

    /// Evaluates `properties` and stores the verdicts in the trace.
    pub fn evaluate(&mut self, properties: &[Property]) {
        self.verdicts = properties
            .iter()
            .map(|p| NamedVerdict { property: p.name.clone(), verdict: check(self, p) })
            .collect();
    }

    pub fn verdict(&self, property: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.property == property).map(|v| &v.verdict)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
