//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chatsrp_cli::{RunReport, Status};
use chatsrp_core::adversary::{Knowledge, DEFAULT_DEPTH};
use chatsrp_core::crypto::{make_ticket, TicketError, TicketStore};
use chatsrp_core::harness::{honest_schedule, run_scenario, Action, Trace};
use chatsrp_core::prng::{fix64, Nonce, TentPrng, DEFAULT_PARAM};
use chatsrp_core::protocol::{EventKind, Role, Scenario, Variant};
use chatsrp_core::verifier::DIAGNOSTIC_PROPERTY;
use chatsrp_core::{Tag, Term};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Ctx) -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Ctx {
    dir: TempDir,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Runs the CLI and returns the exit code, the parsed report and the elapsed time.
fn chatsrp(args: &[&str], json: &Path) -> Result<(i32, RunReport, Duration), String> {
    let started = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_chatsrp"))
        .args(args)
        .args(["--json", json.to_str().unwrap()])
        .env_remove("CHATSRP_FIXTURES")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let code = o.status.code().unwrap_or(-1);
    if code == 2 {
        return Err(format!("configuration error: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let text = fs::read_to_string(json).map_err(|e| format!("{}: {e}", json.display()))?;
    let report = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((code, report, elapsed))
}

fn load_trace(path: &Path) -> Result<Trace, String> {
    Trace::from_json(&fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn counterexample(report: &RunReport, property: &str) -> Result<PathBuf, String> {
    match report.get(property) {
        Some(Status::Violated { counterexample: Some(p), .. }) => Ok(p.clone()),
        other => Err(format!("{property}: expected an exported counterexample, got {other:?}")),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn ebia_link_interception(ctx: &Ctx) -> Outcome {
    let json = ctx.path("fig2.json");
    let trace = ctx.path("fig2.trace.json");
    let (code, report, t) = chatsrp(
        &["run", "--variant", "ebia", "--schedule", "ebia-link-interception.json", "--trace", trace.to_str().unwrap()],
        &json,
    )?;
    ensure!(code == 1, "exit code {code}, expected 1");
    ensure!(!report.get("activation-requires-user-receipt").is_some_and(Status::holds), "property not violated");
    let tr = load_trace(&trace)?;
    let kinds: Vec<EventKind> = tr.events().iter().map(|e| e.kind).collect();
    ensure!(kinds.contains(&EventKind::CASendsId), "no activation");
    ensure!(!kinds.contains(&EventKind::UserReceivesRegistrationData), "the user saw the link");
    ensure!(!kinds.contains(&EventKind::UserReceivesId), "the user received the identity");
    let confirmation_to_attacker =
        tr.steps.iter().flat_map(|s| &s.sent).any(|m| m.src.role == Role::Ws && m.dst.role == Role::Attacker);
    ensure!(confirmation_to_attacker, "activation confirmation did not reach the attacker");
    ensure!(t < Duration::from_secs(1), "took {}", secs(t));
    Ok(format!("attacker activates alice's account, {} steps, {}", tr.len(), secs(t)))
}

fn no_sms_ablation(ctx: &Ctx) -> Outcome {
    let json = ctx.path("nosms.json");
    let (code, report, t) = chatsrp(&["explore", "--variant", "chatsrp-no-sms", "--export", ctx.dir.path().to_str().unwrap()], &json)?;
    ensure!(code == 1, "exit code {code}, expected 1");
    let b = report.bounds.as_ref().ok_or("no bounds")?;
    ensure!(b.max_steps <= 40 && b.sessions <= 2, "bounds exceed the defaults");
    let tr = load_trace(&counterexample(&report, "issue-requires-request")?)?;
    let events = tr.events();
    let emails: BTreeSet<Term> = tr.scenario.users.iter().map(|u| Scenario::email_term(&u.email)).collect();
    let forged = events.iter().enumerate().find(|(i, e)| {
        e.kind == EventKind::CASendsId
            && emails.contains(&e.args[0])
            && !events[..*i].iter().any(|a| a.kind == EventKind::UserRequestsRegistration && a.args[0] == e.args[0])
    });
    let Some((_, e)) = forged else {
        return Err("counterexample has no unrequested identity for a legitimate user".into());
    };
    ensure!(t < Duration::from_secs(60), "took {}", secs(t));
    Ok(format!("identity for {} issued without a request, {} steps, {}", e.args[0], tr.len(), secs(t)))
}

fn chatsrp_properties_hold(ctx: &Ctx) -> Outcome {
    let mut notes = Vec::new();
    let started = Instant::now();
    for replays in ["0", "1"] {
        let json = ctx.path(&format!("chatsrp-{replays}.json"));
        let (code, report, t) =
            chatsrp(&["explore", "--variant", "chatsrp", "--max-steps", "40", "--sessions", "2", "--replays", replays], &json)?;
        ensure!(code == 0, "exit code {code} with {replays} replays");
        ensure!(report.properties.len() == 6, "{} properties", report.properties.len());
        for p in &report.properties {
            ensure!(p.status == Status::HoldsWithinBound, "{} with {replays} replays: {:?}", p.name, p.status);
        }
        notes.push(format!("replays={replays}: {} states in {}", report.stats.map_or(0, |s| s.states), secs(t)));
    }
    ensure!(started.elapsed() < Duration::from_secs(600), "took {}", secs(started.elapsed()));
    Ok(format!("6/6 hold within steps=40, sessions=2 ({})", notes.join("; ")))
}

fn diagnostic_query(ctx: &Ctx) -> Outcome {
    let json = ctx.path("diag.json");
    let (code, report, t) = chatsrp(&["explore", "--variant", "chatsrp", "--diagnostic"], &json)?;
    ensure!(code == 1, "exit code {code}, expected 1");
    ensure!(!report.get(DIAGNOSTIC_PROPERTY).ok_or("diagnostic query missing")?.holds(), "diagnostic query holds");
    let others = report.properties.iter().filter(|p| p.name != DIAGNOSTIC_PROPERTY);
    for p in others {
        ensure!(p.status.holds(), "{} is violated too", p.name);
    }
    Ok(format!("{DIAGNOSTIC_PROPERTY} violated, the six protocol properties still hold, {}", secs(t)))
}

/// A seeded runner, so every run checks the same cases.
fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

#[derive(Debug, Clone)]
enum TicketOp {
    Issue(u8, u128),
    RedeemIssued(u8),
    RedeemForged(u8, u128),
}

fn ticket_lifecycle(_: &Ctx) -> Outcome {
    let emails = |i: u8| Term::name(format!("user{i}@email.dom"), 0);
    let op = prop_oneof![
        (0u8..3, 0u128..1000).prop_map(|(e, n)| TicketOp::Issue(e, n)),
        (0u8..3).prop_map(TicketOp::RedeemIssued),
        (0u8..3, 0u128..1000).prop_map(|(e, n)| TicketOp::RedeemForged(e, n)),
    ];
    let mut runner = runner(512);
    runner
        .run(&prop::collection::vec(op, 0..40), |ops| {
            // Reference model: the nonce pending per email.
            let mut model: BTreeMap<u8, u128> = BTreeMap::new();
            let mut store = TicketStore::default();
            for op in ops {
                match op {
                    TicketOp::Issue(e, n) => {
                        let r = store.issue(Nonce(n), &emails(e));
                        if model.contains_key(&e) {
                            prop_assert_eq!(r, Err(TicketError::PendingRequestExists(emails(e))));
                        } else {
                            prop_assert_eq!(r, Ok(make_ticket(Nonce(n), &emails(e))));
                            model.insert(e, n);
                        }
                    }
                    TicketOp::RedeemIssued(e) => {
                        let presented = make_ticket(Nonce(model.get(&e).copied().unwrap_or(u128::MAX)), &emails(e));
                        let r = store.redeem(&emails(e), presented.term());
                        if model.remove(&e).is_some() {
                            prop_assert_eq!(r, Ok(()));
                            // Redeemed tickets are gone: a second presentation fails.
                            prop_assert_eq!(store.redeem(&emails(e), presented.term()), Err(TicketError::NoPending(emails(e))));
                        } else {
                            prop_assert_eq!(r, Err(TicketError::NoPending(emails(e))));
                        }
                    }
                    TicketOp::RedeemForged(e, n) => {
                        let r = store.redeem(&emails(e), make_ticket(Nonce(n), &emails(e)).term());
                        match model.get(&e) {
                            None => prop_assert_eq!(r, Err(TicketError::NoPending(emails(e)))),
                            Some(&m) if m == n => {
                                prop_assert_eq!(r, Ok(()));
                                model.remove(&e);
                            }
                            Some(_) => prop_assert_eq!(r, Err(TicketError::Mismatch(emails(e)))),
                        }
                    }
                }
                prop_assert_eq!(store.len(), model.len());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // The same rules inside the protocol.
    let mut s = Scenario::default_for(Variant::ChatSrp);
    s.users.truncate(1);
    let sched = honest_schedule(&s).map_err(|e| e.to_string())?;
    let honest = run_scenario(&s, &sched).map_err(|e| e.to_string())?;
    let find = |tag: Tag| honest.steps.iter().flat_map(|st| &st.sent).find(|m| m.tag == tag).cloned().unwrap();
    let (msg2, msg6) = (find(Tag::Msg2), find(Tag::Msg6));
    let mut replay6 = sched.clone();
    replay6.push(Action::Inject { msg: msg6 });
    let t = run_scenario(&s, &replay6).map_err(|e| e.to_string())?;
    let last = t.steps.last().unwrap();
    ensure!(last.events.is_empty() && last.sent.is_empty(), "replayed message 6 was accepted");
    let delivered2 = sched.iter().position(|a| matches!(a, Action::Deliver { msg } if *msg == msg2)).unwrap();
    let mut replay2 = sched[..=delivered2].to_vec();
    replay2.push(Action::Inject { msg: msg2 });
    let t = run_scenario(&s, &replay2).map_err(|e| e.to_string())?;
    let last = t.steps.last().unwrap();
    ensure!(last.sent.is_empty() && last.notes.iter().any(|n| n.contains("already pending")), "second ticket issued");
    Ok("512 random store histories match the model; replayed msg6 and duplicate msg2 dropped".into())
}

fn prng_suite(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    for _ in 0..100 {
        let (seed, a) = (rng.gen_range(1..u64::MAX), rng.gen_range(1..u64::MAX));
        let x = TentPrng::new(seed, a).map_err(|e| e.to_string())?.next_bits(4096);
        let y = TentPrng::new(seed, a).map_err(|e| e.to_string())?.next_bits(4096);
        ensure!(x == y, "streams differ for seed {seed:#x}, a {a:#x}");
    }
    let mut p = TentPrng::new(0x0123_4567_89AB_CDEF, DEFAULT_PARAM).map_err(|e| e.to_string())?;
    let nonces: HashSet<Nonce> = (0..10_000).map(|_| p.generate_nonce().unwrap()).collect();
    ensure!(nonces.len() == 10_000, "{} distinct nonces", nonces.len());
    let n = 100_000;
    let passed = (0..100)
        .filter(|_| {
            let (seed, a) = (rng.gen_range(1..u64::MAX), rng.gen_range(1..u64::MAX));
            let bits = TentPrng::new(seed, a).unwrap().next_bits(n);
            support::monobit_ok(&bits, n) && support::runs_ok(&bits, n)
        })
        .count();
    ensure!(passed >= 95, "{passed}/100 parameter draws pass");
    for a in [DEFAULT_PARAM, fix64(0.5), fix64(0.3), 1, u64::MAX - 1] {
        let mut p = TentPrng::new(0x0123_4567_89AB_CDEF, a).map_err(|e| e.to_string())?;
        for i in 0..1_000_000 {
            p.next_u32();
            ensure!(p.state() != 0 && p.state() != u64::MAX, "absorbed after {i} iterations with a = {a:#x}");
        }
    }
    Ok(format!("deterministic, 10^4 distinct nonces, {passed}/100 pass monobit and runs, no absorption in 10^6"))
}

fn closure_oracle(_: &Ctx) -> Outcome {
    let mut runner = runner(1000);
    let checked = Cell::new(0usize);
    let derivable = Cell::new(0usize);
    runner
        .run(&(support::arb_base(), prop::collection::vec(support::arb_term(3), 4)), |(base, extra)| {
            let k = Knowledge::from_terms(base.iter().cloned(), DEFAULT_DEPTH);
            let targets: BTreeSet<Term> = base.iter().flat_map(support::subterms).chain(extra).collect();
            for t in &targets {
                let expected = support::dy_derivable(&base, t);
                prop_assert_eq!(k.can_derive(t), expected, "target {}", t);
                checked.set(checked.get() + 1);
                derivable.set(derivable.get() + usize::from(expected));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("1000 knowledge sets, {} queries ({} derivable) agree", checked.get(), derivable.get()))
}

fn replay_determinism(ctx: &Ctx) -> Outcome {
    let explored = ctx.path("ebia-explore.json");
    let (_, report, _) = chatsrp(&["explore", "--variant", "ebia", "--export", ctx.dir.path().to_str().unwrap()], &explored)?;
    let mut files: Vec<PathBuf> = ["ebia-link-interception.trace.json", "no-sms-registration.trace.json"]
        .iter()
        .map(|g| Path::new(chatsrp_cli::DEFAULT_FIXTURES).join("golden").join(g))
        .collect();
    files.push(counterexample(&report, "activation-requires-user-receipt")?);
    // Counterexamples exported by the no-SMS exploration above.
    for entry in fs::read_dir(ctx.dir.path()).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        if p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("chatsrp-no-sms-")) {
            files.push(p);
        }
    }
    ensure!(files.len() >= 6, "only {} traces to replay", files.len());
    for (i, f) in files.iter().enumerate() {
        let out = ctx.path(&format!("replayed-{i}.trace.json"));
        let json = ctx.path(&format!("replayed-{i}.json"));
        let (_, r, _) = chatsrp(&["replay", f.to_str().unwrap(), "--trace", out.to_str().unwrap()], &json)?;
        ensure!(r.reproduces == Some(true), "{} does not reproduce", f.display());
        let (a, b) = (fs::read(f).map_err(|e| e.to_string())?, fs::read(&out).map_err(|e| e.to_string())?);
        ensure!(a == b, "{} differs byte-wise after replay", f.display());
    }
    Ok(format!("{} traces (2 golden, {} exported) replay byte for byte", files.len(), files.len() - 2))
}

fn main() {
    let ctx = Ctx { dir: TempDir::new().expect("temporary directory") };
    let criteria: [Criterion; 8] = [
        ("EBIA link interception", ebia_link_interception),
        ("no-SMS ablation counterexample", no_sms_ablation),
        ("CHAT-SRP properties hold within bound", chatsrp_properties_hold),
        ("diagnostic SMS query fails", diagnostic_query),
        ("ticket lifecycle", ticket_lifecycle),
        ("PRNG suite", prng_suite),
        ("Dolev-Yao closure oracle equivalence", closure_oracle),
        ("replay determinism", replay_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&ctx))).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = secs(started.elapsed());
        match result {
            Ok(detail) => println!("PASS  {}. {name}: {detail} [{elapsed}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}. {name}: {why} [{elapsed}]", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
