//! Scheduler, bounded exploration and trace recording.

mod explore;
mod trace;
mod world;

use std::collections::VecDeque;

use thiserror::Error;

use crate::prng::PrngError;
use crate::protocol::{Scenario, ScenarioError};

pub use explore::{explore, ExploreConfig, ExploreOutcome, ExploreStats, PropertyOutcome, SearchStrategy};
pub use trace::{NamedVerdict, Trace, TRACE_SCHEMA};
pub use world::{initial_knowledge, Action, MoveBounds, RecordedEvent, StepError, TraceStep, World};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid action at step {index}: {reason}")]
    InvalidActionAtStep { index: usize, reason: String },
    #[error("nonce generator failure: {0}")]
    Prng(#[from] PrngError),
}

/// Executes an explicit schedule. The resulting trace carries no verdicts;
/// see [`Trace::evaluate`].
pub fn run_scenario(scenario: &Scenario, schedule: &[Action]) -> Result<Trace, HarnessError> {
    let mut world = World::new(scenario)?;
    let init = if world.attacker_enabled() { initial_knowledge(scenario)? } else { Vec::new() };
    let mut trace = Trace::new(scenario.clone(), init);
    for (index, action) in schedule.iter().enumerate() {
        match world.apply(action) {
            Ok(step) => trace.steps.push(step),
            Err(StepError::Invalid(reason)) => return Err(HarnessError::InvalidActionAtStep { index, reason }),
            Err(StepError::Prng(e)) => return Err(e.into()),
        }
    }
    Ok(trace)
}

/// The attacker-free schedule: every user starts, then messages are
/// delivered in the order they were sent until the network is quiet.
pub fn honest_schedule(scenario: &Scenario) -> Result<Vec<Action>, HarnessError> {
    let mut world = World::new(scenario)?;
    let mut schedule = Vec::new();
    let mut queue = VecDeque::new();
    let mut run = |world: &mut World, action: Action, queue: &mut VecDeque<_>| -> Result<(), HarnessError> {
        let step = world.apply(&action).map_err(|e| match e {
            StepError::Invalid(reason) => HarnessError::InvalidActionAtStep { index: schedule.len(), reason },
            StepError::Prng(e) => HarnessError::Prng(e),
        })?;
        for msg in step.sent {
            if world.pool().binary_search(&msg).is_ok() {
                queue.push_back(msg);
            }
        }
        schedule.push(action);
        Ok(())
    };
    for u in &scenario.users {
        run(&mut world, Action::Start { user: u.name.clone() }, &mut queue)?;
    }
    while let Some(msg) = queue.pop_front() {
        run(&mut world, Action::Deliver { msg }, &mut queue)?;
    }
    Ok(schedule)
}
