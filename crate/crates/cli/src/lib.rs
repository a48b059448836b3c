//! Command-line front end: `run`, `explore`, `replay` and `prng`.
//!
//! Exit codes are 0 when every property holds, 1 when some property is
//! violated and 2 for configuration errors.

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chatsrp_core::harness::{explore, honest_schedule, run_scenario, Action, ExploreConfig, SearchStrategy, Trace};
use chatsrp_core::prng::{parse_hex_u64, TentPrng, DEFAULT_PARAM};
use chatsrp_core::verifier::{builtin_properties, parse_properties};
use chatsrp_core::{Property, Scenario, Variant};
use clap::{Args, Parser, Subcommand};

pub use report::{Bounds, Command, PropertyReport, RunReport, Status, REPORT_SCHEMA};

/// Fixture directory used when neither `--fixtures` nor the environment names one.
pub const DEFAULT_FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

#[derive(Debug, Parser)]
#[command(name = "chatsrp", version, about = "Bounded Dolev-Yao analysis of the CHAT-SRP registration protocol")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Execute one schedule (the honest one by default) and check it.
    Run(RunArgs),
    /// Search attacker strategies and interleavings up to a bound.
    Explore(ExploreArgs),
    /// Re-execute a recorded trace or schedule.
    Replay(ReplayArgs),
    /// Dump raw generator output for external statistical test suites.
    Prng(PrngArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Protocol variant; selects `<fixtures>/<variant>.json` unless `--fixture` is given.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Scenario fixture file.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Directory holding the shipped fixtures.
    #[arg(long, env = "CHATSRP_FIXTURES")]
    pub fixtures: Option<PathBuf>,
    /// PRNG seed as hexadecimal, overriding the fixture.
    #[arg(long)]
    pub seed: Option<String>,
    /// JSON property file replacing the built-in queries.
    #[arg(long)]
    pub properties: Option<PathBuf>,
    /// Also check the SMS-processing diagnostic query, which is expected to fail.
    #[arg(long)]
    pub diagnostic: bool,
    /// Write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Action list (JSON array) or recorded trace to execute.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Write the trace here; defaults to beside the report.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 40)]
    pub max_steps: usize,
    /// Honest users allowed to start.
    #[arg(long, default_value_t = 2)]
    pub sessions: usize,
    /// `dfs` or `random:N`.
    #[arg(long, default_value = "dfs")]
    pub search: String,
    /// Verbatim replays of observed messages per schedule.
    #[arg(long, default_value_t = 0)]
    pub replays: usize,
    /// SSL sessions the attacker may open with the WS.
    #[arg(long, default_value_t = 1)]
    pub bypass: usize,
    #[arg(long)]
    pub no_attacker: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Directory for counterexample traces; defaults to the report's directory.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Recorded trace, or a bare action list used with the scenario options.
    pub input: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Write the replayed trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrngArgs {
    #[arg(long)]
    pub seed: String,
    /// Tent map parameter as hexadecimal; defaults to fix64(0.499).
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long)]
    pub bits: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

/// Runs a parsed command line and returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    let report = match cli.command {
        Cmd::Run(a) => cmd_run(&a)?,
        Cmd::Explore(a) => cmd_explore(&a)?,
        Cmd::Replay(a) => cmd_replay(&a)?,
        Cmd::Prng(a) => {
            let n = cmd_prng(&a)?;
            writeln!(out, "wrote {n} bits to {}", a.out.display())?;
            return Ok(0);
        }
    };
    write!(out, "{}", report.render())?;
    Ok(if report.all_hold() { 0 } else { 1 })
}

impl ScenarioArgs {
    fn fixtures_dir(&self) -> PathBuf {
        self.fixtures.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_FIXTURES))
    }

    /// Resolves a user-supplied path, falling back to the fixture directory.
    fn locate(&self, path: &Path) -> PathBuf {
        if path.exists() || path.is_absolute() {
            return path.to_path_buf();
        }
        let candidate = self.fixtures_dir().join(path);
        if candidate.exists() {
            candidate
        } else {
            path.to_path_buf()
        }
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        let path = match &self.fixture {
            Some(p) => self.locate(p),
            None => {
                let v = self.variant.unwrap_or(Variant::ChatSrp);
                self.fixtures_dir().join(format!("{v}.json"))
            }
        };
        let text = fs::read_to_string(&path).with_context(|| format!("reading fixture {}", path.display()))?;
        let mut s = Scenario::from_json(&text).with_context(|| format!("parsing fixture {}", path.display()))?;
        self.apply_overrides(&mut s)?;
        Ok(s)
    }

    fn apply_overrides(&self, s: &mut Scenario) -> Result<()> {
        if let Some(v) = self.variant {
            s.variant = v;
        }
        if let Some(seed) = &self.seed {
            parse_hex_u64(seed).with_context(|| format!("--seed {seed}"))?;
            s.seed = seed.clone();
        }
        s.validate()?;
        Ok(())
    }

    pub fn properties(&self, variant: Variant) -> Result<Vec<Property>> {
        match &self.properties {
            Some(p) => {
                let path = self.locate(p);
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                parse_properties(&text).with_context(|| format!("parsing {}", path.display()))
            }
            None => Ok(builtin_properties(variant, self.diagnostic)),
        }
    }

    fn write_report(&self, report: &RunReport) -> Result<()> {
        if let Some(path) = &self.json {
            fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }

    /// Where a trace goes when the caller did not say: beside the report.
    fn default_trace_path(&self) -> Option<PathBuf> {
        self.json.as_ref().map(|j| j.with_extension("trace.json"))
    }
}

/// Reads an action list, accepting either a bare JSON array or a recorded trace.
pub fn read_schedule(path: &Path) -> Result<Vec<Action>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading schedule {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing schedule {}", path.display()))?;
    if value.is_object() {
        let trace: Trace = serde_json::from_value(value).with_context(|| format!("parsing trace {}", path.display()))?;
        return Ok(trace.schedule());
    }
    serde_json::from_str(&text).with_context(|| format!("parsing schedule {}", path.display()))
}

fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    fs::write(path, trace.to_json()).with_context(|| format!("writing {}", path.display()))
}

fn trace_report(command: Command, scenario: &Scenario, trace: &Trace, started: Instant) -> RunReport {
    RunReport {
        schema: REPORT_SCHEMA.into(),
        command,
        variant: scenario.variant,
        seed: scenario.seed.clone(),
        bounds: None,
        properties: trace
            .verdicts
            .iter()
            .map(|v| PropertyReport { name: v.property.clone(), status: Status::from_verdict(&v.verdict, false) })
            .collect(),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        steps: trace.len(),
        trace: None,
        stats: None,
        reproduces: None,
    }
}

pub fn cmd_run(a: &RunArgs) -> Result<RunReport> {
    let started = Instant::now();
    let scenario = a.scenario.load_scenario()?;
    let properties = a.scenario.properties(scenario.variant)?;
    let schedule = match &a.schedule {
        Some(p) => read_schedule(&a.scenario.locate(p))?,
        None => honest_schedule(&scenario)?,
    };
    let mut trace = run_scenario(&scenario, &schedule)?;
    trace.evaluate(&properties);
    let mut report = trace_report(Command::Run, &scenario, &trace, started);
    if let Some(path) = a.trace.clone().or_else(|| a.scenario.default_trace_path()) {
        write_trace(&path, &trace)?;
        report.trace = Some(path);
    }
    a.scenario.write_report(&report)?;
    Ok(report)
}

fn parse_search(text: &str, seed: u64) -> Result<SearchStrategy> {
    match text.split_once(':') {
        None if text == "dfs" => Ok(SearchStrategy::Dfs),
        Some(("random", n)) => {
            let runs = n.parse().with_context(|| format!("--search {text}: run count"))?;
            Ok(SearchStrategy::Random { seed, runs })
        }
        _ => bail!("--search {text}: expected dfs or random:N"),
    }
}

pub fn cmd_explore(a: &ExploreArgs) -> Result<RunReport> {
    let started = Instant::now();
    let scenario = a.scenario.load_scenario()?;
    let properties = a.scenario.properties(scenario.variant)?;
    let cfg = ExploreConfig {
        max_steps: a.max_steps,
        max_sessions: a.sessions,
        attacker: !a.no_attacker,
        search: parse_search(&a.search, scenario.seed_value()?)?,
        max_bypass: a.bypass,
        max_replays: a.replays,
        workers: a.workers,
    };
    let outcome = explore(&scenario, &cfg, &properties)?;
    let export_dir = a
        .export
        .clone()
        .or_else(|| a.scenario.json.as_ref().and_then(|j| j.parent()).map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut reports = Vec::new();
    for r in &outcome.results {
        let mut status = Status::from_verdict(&r.verdict, true);
        if let (Some(cex), Status::Violated { counterexample, counterexample_steps, .. }) = (&r.counterexample, &mut status) {
            if export_dir.as_os_str().is_empty() {
                bail!("empty export directory");
            }
            fs::create_dir_all(&export_dir).with_context(|| format!("creating {}", export_dir.display()))?;
            let path = export_dir.join(format!("{}-{}.trace.json", scenario.variant, r.property));
            write_trace(&path, cex)?;
            *counterexample = Some(path);
            *counterexample_steps = Some(cex.len());
        }
        reports.push(PropertyReport { name: r.property.clone(), status });
    }
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        command: Command::Explore,
        variant: scenario.variant,
        seed: scenario.seed.clone(),
        bounds: Some(Bounds {
            max_steps: cfg.max_steps,
            sessions: cfg.max_sessions,
            attacker: cfg.attacker,
            search: cfg.search,
            max_bypass: cfg.max_bypass,
            max_replays: cfg.max_replays,
            workers: cfg.workers,
        }),
        properties: reports,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        steps: outcome.stats.max_depth,
        trace: None,
        stats: Some(outcome.stats),
        reproduces: None,
    };
    a.scenario.write_report(&report)?;
    Ok(report)
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<RunReport> {
    let started = Instant::now();
    let path = a.scenario.locate(&a.input);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let recorded: Option<Trace> = match serde_json::from_str::<serde_json::Value>(&text)
        .with_context(|| format!("parsing {}", path.display()))?
    {
        v @ serde_json::Value::Object(_) => {
            Some(serde_json::from_value(v).with_context(|| format!("parsing trace {}", path.display()))?)
        }
        _ => None,
    };
    let (scenario, schedule, properties) = match &recorded {
        Some(t) => {
            let mut s = t.scenario.clone();
            a.scenario.apply_overrides(&mut s)?;
            let properties = if a.scenario.properties.is_some() || t.verdicts.is_empty() {
                a.scenario.properties(s.variant)?
            } else {
                // Re-check exactly what was recorded.
                let names: Vec<&str> = t.verdicts.iter().map(|v| v.property.as_str()).collect();
                let known = builtin_properties(s.variant, true);
                names
                    .iter()
                    .map(|n| known.iter().find(|p| p.name == *n).cloned())
                    .collect::<Option<Vec<_>>>()
                    .context("the recorded trace checks custom properties; pass --properties")?
            };
            (s, t.schedule(), properties)
        }
        None => {
            let s = a.scenario.load_scenario()?;
            let p = a.scenario.properties(s.variant)?;
            (s, read_schedule(&path)?, p)
        }
    };
    let mut trace = run_scenario(&scenario, &schedule)?;
    trace.evaluate(&properties);
    let mut report = trace_report(Command::Replay, &scenario, &trace, started);
    if let Some(t) = &recorded {
        report.reproduces = Some(t.to_json() == trace.to_json());
    }
    if let Some(out) = a.trace.clone().or_else(|| a.scenario.default_trace_path()) {
        write_trace(&out, &trace)?;
        report.trace = Some(out);
    }
    a.scenario.write_report(&report)?;
    if report.reproduces == Some(false) {
        bail!("replay of {} does not reproduce the recorded trace", path.display());
    }
    Ok(report)
}

/// Writes `bits` generator bits, packed most significant first.
pub fn cmd_prng(a: &PrngArgs) -> Result<usize> {
    let seed = parse_hex_u64(&a.seed).with_context(|| format!("--seed {}", a.seed))?;
    let param = match &a.param {
        Some(p) => parse_hex_u64(p).with_context(|| format!("--param {p}"))?,
        None => DEFAULT_PARAM,
    };
    let mut prng = TentPrng::new(seed, param)?;
    fs::write(&a.out, prng.next_bits(a.bits)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(a.bits)
}
