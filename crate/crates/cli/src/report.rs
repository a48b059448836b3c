use std::fmt::Write as _;
use std::path::PathBuf;

use chatsrp_core::harness::{ExploreStats, SearchStrategy};
use chatsrp_core::{Variant, Verdict};
use serde::{Deserialize, Serialize};

/// Version tag written into every report.
pub const REPORT_SCHEMA: &str = "chatsrp-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Run,
    Explore,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub max_steps: usize,
    pub sessions: usize,
    pub attacker: bool,
    pub search: SearchStrategy,
    pub max_bypass: usize,
    pub max_replays: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Status {
    /// The single executed trace satisfies the property.
    Holds,
    /// No trace within the exploration bounds violates the property.
    HoldsWithinBound,
    Violated {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counterexample: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counterexample_steps: Option<usize>,
    },
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Explore => "explore",
            Command::Replay => "replay",
        }
    }
}

impl Status {
    pub fn holds(&self) -> bool {
        !matches!(self, Status::Violated { .. })
    }

    pub fn from_verdict(v: &Verdict, bounded: bool) -> Self {
        match v {
            Verdict::Holds if bounded => Status::HoldsWithinBound,
            Verdict::Holds => Status::Holds,
            Verdict::Violated { reason, .. } => {
                Status::Violated { reason: reason.clone(), counterexample: None, counterexample_steps: None }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    #[serde(flatten)]
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: Command,
    pub variant: Variant,
    pub seed: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    /// One entry per requested property, in request order.
    pub properties: Vec<PropertyReport>,
    pub wall_time_ms: f64,
    /// Steps in the executed trace, or the deepest explored schedule.
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ExploreStats>,
    /// For replays of recorded traces: whether the rerun matched byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduces: Option<bool>,
}

impl RunReport {
    pub fn all_hold(&self) -> bool {
        self.properties.iter().all(|p| p.status.holds())
    }

    pub fn get(&self, name: &str) -> Option<&Status> {
        self.properties.iter().find(|p| p.name == name).map(|p| &p.status)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} (seed {})", self.command.as_str(), self.variant, self.seed);
        if let Some(b) = &self.bounds {
            let search = match b.search {
                SearchStrategy::Dfs => "dfs".to_string(),
                SearchStrategy::Random { runs, .. } => format!("random:{runs}"),
            };
            let _ = writeln!(
                s,
                "bounds: steps={}, sessions={}, attacker {}, search {search}, replays={}",
                b.max_steps,
                b.sessions,
                if b.attacker { "on" } else { "off" },
                b.max_replays
            );
        }
        let width = self.properties.iter().map(|p| p.name.len()).max().unwrap_or(0);
        for p in &self.properties {
            let text = match &p.status {
                Status::Holds => "holds on this trace".to_string(),
                Status::HoldsWithinBound => {
                    let b = self.bounds.as_ref().expect("bounded verdicts come with bounds");
                    format!("no violation within bound (steps={}, sessions={})", b.max_steps, b.sessions)
                }
                Status::Violated { reason, counterexample, counterexample_steps } => {
                    let mut t = format!("violated: {reason}");
                    if let Some(path) = counterexample {
                        let _ = write!(t, " (counterexample: {}", path.display());
                        if let Some(n) = counterexample_steps {
                            let _ = write!(t, ", {n} steps");
                        }
                        t.push(')');
                    }
                    t
                }
            };
            let _ = writeln!(s, "  {:width$}  {text}", p.name);
        }
        if let Some(st) = &self.stats {
            let _ = writeln!(
                s,
                "explored {} states, {} transitions, {} pruned in {:.1} ms",
                st.states, st.transitions, st.pruned, self.wall_time_ms
            );
        } else {
            let _ = writeln!(s, "{} steps in {:.1} ms", self.steps, self.wall_time_ms);
        }
        if let Some(t) = &self.trace {
            let _ = writeln!(s, "trace written to {}", t.display());
        }
        if let Some(r) = self.reproduces {
            let _ = writeln!(s, "{}", if r { "replay matches the recorded trace" } else { "replay differs from the recorded trace" });
        }
        s
    }
}
