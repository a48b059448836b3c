use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::Trace;
use super::world::{initial_knowledge, Action, MoveBounds, StepError, TraceStep, World};
use super::HarnessError;
use crate::prng::PrngError;
use crate::protocol::{Event, Scenario};
use crate::verifier::{Property, PropertyKind, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Exhaustive depth-first search up to the step bound.
    Dfs,
    /// `runs` uniformly random schedules, reproducible from `seed`.
    Random { seed: u64, runs: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub max_steps: usize,
    /// Honest users allowed to start.
    pub max_sessions: usize,
    pub attacker: bool,
    pub search: SearchStrategy,
    /// SSL sessions the attacker may open with the WS.
    pub max_bypass: usize,
    /// Verbatim replays of observed messages, counting only those that change
    /// some principal's state.
    pub max_replays: usize,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_steps: 40,
            max_sessions: 2,
            attacker: true,
            search: SearchStrategy::Dfs,
            max_bypass: 1,
            max_replays: 0,
            workers: 0,
        }
    }
}

impl ExploreConfig {
    fn bounds(&self) -> MoveBounds {
        MoveBounds {
            max_sessions: self.max_sessions,
            attacker: self.attacker,
            max_bypass: self.max_bypass,
            max_replays: self.max_replays,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub property: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Trace>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreStats {
    /// Distinct states expanded.
    pub states: usize,
    pub transitions: usize,
    /// States skipped because an equal state was already explored at least as deep.
    pub pruned: usize,
    pub max_depth: usize,
    pub runs: usize,
}

impl ExploreStats {
    fn add(&mut self, o: &ExploreStats) {
        self.states += o.states;
        self.transitions += o.transitions;
        self.pruned += o.pruned;
        self.max_depth = self.max_depth.max(o.max_depth);
        self.runs += o.runs;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreOutcome {
    pub results: Vec<PropertyOutcome>,
    pub stats: ExploreStats,
}

impl ExploreOutcome {
    pub fn all_hold(&self) -> bool {
        self.results.iter().all(|r| r.verdict.holds())
    }

    pub fn get(&self, property: &str) -> Option<&PropertyOutcome> {
        self.results.iter().find(|r| r.property == property)
    }
}

/// Two independent multiply-rotate lanes fed in one pass over the state.
#[derive(Default)]
struct FingerprintHasher {
    a: u64,
    b: u64,
}

impl FingerprintHasher {
    #[inline]
    fn mix(&mut self, w: u64) {
        self.a = (self.a ^ w).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(29);
        self.b = (self.b.rotate_left(23) ^ w).wrapping_mul(0xC2B2_AE3D_27D4_EB4F).wrapping_add(0x1656_67B1_9E37_79F9);
    }

    fn finish128(&self) -> u128 {
        let avalanche = |mut z: u64| {
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        (u128::from(avalanche(self.a)) << 64) | u128::from(avalanche(self.b))
    }
}

impl Hasher for FingerprintHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.mix(u64::from_le_bytes(word) ^ ((chunk.len() as u64) << 59));
        }
    }

    fn write_u8(&mut self, i: u8) {
        self.mix(u64::from(i));
    }

    fn write_u32(&mut self, i: u32) {
        self.mix(u64::from(i));
    }

    fn write_u64(&mut self, i: u64) {
        self.mix(i);
    }

    fn write_u128(&mut self, i: u128) {
        self.mix(i as u64);
        self.mix((i >> 64) as u64);
    }

    fn write_usize(&mut self, i: usize) {
        self.mix(i as u64);
    }

    fn finish(&self) -> u64 {
        self.a
    }
}

fn fingerprint(w: &World) -> u128 {
    let mut h = FingerprintHasher::default();
    w.hash(&mut h);
    h.finish128()
}

/// Memo value of a state whose whole subtree fits within the bound.
const COMPLETE: usize = usize::MAX;

/// Per-worker search state. `found[i]` holds the path that violates property `i`.
struct Search<'a> {
    props: &'a [Property],
    bounds: MoveBounds,
    memo: HashMap<u128, usize>,
    found: Vec<Option<Vec<TraceStep>>>,
    path: Vec<TraceStep>,
    events: Vec<Event>,
    stats: ExploreStats,
}

impl<'a> Search<'a> {
    fn new(props: &'a [Property], bounds: MoveBounds) -> Self {
        Search {
            props,
            bounds,
            memo: HashMap::new(),
            found: vec![None; props.len()],
            path: Vec::new(),
            events: Vec::new(),
            stats: ExploreStats::default(),
        }
    }

    fn done(&self) -> bool {
        self.found.iter().all(Option::is_some)
    }

    /// Checks the properties the last step could have broken.
    fn check(&mut self, world: &World, step: &TraceStep) {
        for (i, p) in self.props.iter().enumerate() {
            if self.found[i].is_some() {
                continue;
            }
            let relevant = match &p.kind {
                PropertyKind::Secrecy(_) => !step.learned.is_empty(),
                PropertyKind::Correspondence { consequent, .. } => {
                    step.events.iter().any(|e| e.event.kind == consequent.kind)
                }
            };
            if relevant && !p.evaluate(&self.events, world.knowledge()).holds() {
                self.found[i] = Some(self.path.clone());
            }
        }
    }

    /// Applies `action`, records it on the path, and checks properties.
    fn advance(&mut self, world: &World, action: &Action) -> Result<World, PrngError> {
        let mut next = world.clone();
        let step = match next.apply(action) {
            Ok(s) => s,
            Err(StepError::Prng(e)) => return Err(e),
            Err(StepError::Invalid(why)) => unreachable!("offered move rejected: {why}"),
        };
        self.stats.transitions += 1;
        self.events.extend(step.events.iter().map(|e| e.event.clone()));
        self.path.push(step);
        self.stats.max_depth = self.stats.max_depth.max(self.path.len());
        let last = self.path.last().unwrap().clone();
        self.check(&next, &last);
        Ok(next)
    }

    fn retreat(&mut self) {
        let step = self.path.pop().expect("non-empty path");
        self.events.truncate(self.events.len() - step.events.len());
    }

    /// Returns whether the step bound cut off any part of the subtree.
    ///
    /// A state whose subtree was explored without reaching the bound is marked
    /// complete and never expanded again, whatever the remaining depth on a
    /// later visit; otherwise it is revisited only with more depth to spend.
    fn dfs(&mut self, world: &World, remaining: usize) -> Result<bool, PrngError> {
        if self.done() {
            return Ok(true);
        }
        let moves = world.moves(&self.bounds);
        if remaining == 0 {
            return Ok(!moves.is_empty());
        }
        let key = fingerprint(world);
        match self.memo.get(&key) {
            Some(&COMPLETE) => {
                self.stats.pruned += 1;
                return Ok(false);
            }
            Some(&seen) if seen >= remaining => {
                self.stats.pruned += 1;
                return Ok(true);
            }
            _ => {
                self.memo.insert(key, remaining);
            }
        }
        self.stats.states += 1;
        let mut cut = false;
        for action in moves {
            let next = self.advance(world, &action)?;
            if next != *world {
                cut |= self.dfs(&next, remaining - 1)?;
            }
            self.retreat();
            if self.done() {
                return Ok(true);
            }
        }
        if !cut {
            self.memo.insert(key, COMPLETE);
        }
        Ok(cut)
    }

    fn random_run(&mut self, world: &World, max_steps: usize, rng: &mut ChaCha8Rng) -> Result<(), PrngError> {
        let mut world = world.clone();
        for _ in 0..max_steps {
            let moves = world.moves(&self.bounds);
            if moves.is_empty() || self.done() {
                break;
            }
            let action = &moves[rng.gen_range(0..moves.len())];
            world = self.advance(&world, action)?;
        }
        self.stats.runs += 1;
        self.stats.states += self.path.len();
        self.path.clear();
        self.events.clear();
        Ok(())
    }
}

/// Searches the schedules allowed by `cfg` for violations of `properties`.
///
/// Reports the first counterexample per property, in the deterministic order
/// of moves (DFS) or runs (random search). A property with no counterexample
/// holds within the bound; nothing is proved beyond it.
pub fn explore(scenario: &Scenario, cfg: &ExploreConfig, properties: &[Property]) -> Result<ExploreOutcome, HarnessError> {
    let root = World::new(scenario)?;
    let init = if root.attacker_enabled() { initial_knowledge(scenario)? } else { Vec::new() };
    let bounds = cfg.bounds();
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if cfg.workers > 0 {
            b = b.num_threads(cfg.workers);
        }
        b.build().expect("thread pool")
    };

    let searches: Vec<Search<'_>> = if cfg.max_steps == 0 {
        Vec::new()
    } else {
        match cfg.search {
            SearchStrategy::Dfs if cfg.workers == 1 => {
                let mut s = Search::new(properties, bounds);
                s.dfs(&root, cfg.max_steps).map_err(HarnessError::from)?;
                vec![s]
            }
            SearchStrategy::Dfs => {
                let moves = root.moves(&bounds);
                pool.install(|| {
                    moves
                        .par_iter()
                        .map(|action| {
                            let mut s = Search::new(properties, bounds);
                            let next = s.advance(&root, action)?;
                            if next != root {
                                s.dfs(&next, cfg.max_steps - 1)?;
                            }
                            Ok(s)
                        })
                        .collect::<Result<Vec<_>, PrngError>>()
                })?
            }
            SearchStrategy::Random { seed, runs } => pool.install(|| {
                (0..runs)
                    .into_par_iter()
                    .map(|run| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(run as u64);
                        let mut s = Search::new(properties, bounds);
                        s.random_run(&root, cfg.max_steps, &mut rng)?;
                        Ok(s)
                    })
                    .collect::<Result<Vec<_>, PrngError>>()
            })?,
        }
    };

    let mut stats = ExploreStats::default();
    for s in &searches {
        stats.add(&s.stats);
    }
    if matches!(cfg.search, SearchStrategy::Dfs) && cfg.workers != 1 && cfg.max_steps > 0 {
        // The root itself was expanded here, outside the workers.
        stats.states += 1;
    }
    let results = properties
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let path = searches.iter().find_map(|s| s.found[i].clone());
            match path {
                None => PropertyOutcome { property: p.name.clone(), verdict: Verdict::Holds, counterexample: None },
                Some(steps) => {
                    let mut trace = Trace::new(scenario.clone(), init.clone());
                    trace.steps = steps;
                    trace.evaluate(properties);
                    let verdict = trace.verdict(&p.name).cloned().expect("evaluated above");
                    PropertyOutcome { property: p.name.clone(), verdict, counterexample: Some(trace) }
                }
            }
        })
        .collect();
    Ok(ExploreOutcome { results, stats })
}
