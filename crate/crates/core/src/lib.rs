//! Executable model of the CHAT-SRP registration protocol.
//!
//! The crate bundles a deterministic chaos-based generator ([`prng`]), a
//! symbolic Dolev-Yao term algebra ([`crypto`]), the principal state machines
//! ([`protocol`]), the attacker ([`adversary`]), a scheduler with bounded
//! exploration ([`harness`]) and a trace verifier for secrecy and injective
//! correspondence properties ([`verifier`]).

pub mod adversary;
pub mod crypto;
pub mod harness;
pub mod prng;
pub mod protocol;
pub mod verifier;

pub use crypto::{Tag, Term};
pub use harness::{explore, run_scenario, Action, ExploreConfig, ExploreOutcome, SearchStrategy, Trace};
pub use protocol::{ChannelMsg, Event, EventKind, PrincipalId, Role, Scenario, Variant};
pub use verifier::{builtin_properties, Property, Verdict};
