use chatsrp_core::harness::{honest_schedule, run_scenario, Action, Trace};
use chatsrp_core::protocol::{Channel, ChannelMsg, EventKind, PrincipalId, Role, Scenario, SessionId, Variant};
use chatsrp_core::verifier::{builtin_properties, DIAGNOSTIC_PROPERTY};
use chatsrp_core::{Tag, Term};

fn single_user(variant: Variant) -> Scenario {
    let mut s = Scenario::default_for(variant);
    s.users.truncate(1);
    s
}

fn honest(s: &Scenario) -> Trace {
    let mut t = run_scenario(s, &honest_schedule(s).unwrap()).unwrap();
    t.evaluate(&builtin_properties(s.variant, true));
    t
}

fn kinds(t: &Trace) -> Vec<EventKind> {
    t.events().iter().map(|e| e.kind).collect()
}

#[test]
fn honest_run_follows_the_sequence_diagram() {
    let t = honest(&single_user(Variant::ChatSrp));
    let flow: Vec<&str> = t.steps.iter().filter_map(|s| s.flow.as_deref()).collect();
    assert_eq!(flow, ["1", "2", "3", "4", "5", "6.1", "6.2", "7.1", "7.2", "8", "9", "10", "11", "12"]);
    use EventKind::*;
    assert_eq!(
        kinds(&t),
        [
            UserRequestsRegistration,
            WSSendsSMS,
            UserProcessesSMS,
            RASendsTicket,
            WSSendsLink,
            UserReceivesRegistrationData,
            CASendsId,
            UserReceivesId
        ]
    );
    let verdicts: Vec<_> = t.verdicts.iter().filter(|v| !v.verdict.holds()).map(|v| v.property.as_str()).collect();
    assert!(verdicts.is_empty(), "{verdicts:?}");
}

#[test]
fn honest_run_with_two_users_completes_both() {
    let t = honest(&Scenario::default_for(Variant::ChatSrp));
    let received = t.events().iter().filter(|e| e.kind == EventKind::UserReceivesId).count();
    assert_eq!(received, 2);
    assert!(t.verdicts.iter().all(|v| v.verdict.holds()));
}

#[test]
fn passive_attacker_learns_no_identity() {
    let t = honest(&Scenario::default_for(Variant::ChatSrp));
    let k = t.final_knowledge();
    for e in t.events().iter().filter(|e| e.kind == EventKind::CASendsId) {
        assert!(!k.can_derive(&e.args[1]), "{} leaked", e.args[1]);
    }
}

#[test]
fn event_sequence_numbers_are_unique_and_increasing() {
    let t = honest(&Scenario::default_for(Variant::ChatSrp));
    let seqs: Vec<usize> = t.steps.iter().flat_map(|s| s.events.iter().map(|e| e.seq)).collect();
    assert_eq!(seqs, (0..seqs.len()).collect::<Vec<_>>());
    for (i, s) in t.steps.iter().enumerate() {
        assert_eq!(s.index, i);
    }
}

#[test]
fn honest_ebia_run_completes() {
    let t = honest(&single_user(Variant::Ebia));
    use EventKind::*;
    assert_eq!(kinds(&t), [UserRequestsRegistration, WSSendsLink, UserReceivesRegistrationData, CASendsId, UserReceivesId]);
    assert!(t.verdicts.iter().all(|v| v.verdict.holds()));
}

fn ebia_attack(s: &Scenario) -> Vec<Action> {
    let mut pre = run_scenario(s, &[Action::Start { user: "alice".into() }]).unwrap();
    let request = pre.steps[0].sent[0].clone();
    pre = run_scenario(s, &[Action::Start { user: "alice".into() }, Action::Deliver { msg: request.clone() }]).unwrap();
    let mail = pre.steps[1].sent.iter().find(|m| m.channel == Channel::Smtp).unwrap().clone();
    let eve = PrincipalId::new(Role::Attacker, "eve");
    vec![
        Action::Start { user: "alice".into() },
        Action::Deliver { msg: request },
        Action::Block { msg: mail.clone() },
        Action::Inject { msg: ChannelMsg::new(Channel::Public, Tag::Msg5, eve, PrincipalId::ws(), mail.payload) },
    ]
}

#[test]
fn ebia_link_interception_hands_the_account_to_the_attacker() {
    let s = single_user(Variant::Ebia);
    let mut t = run_scenario(&s, &ebia_attack(&s)).unwrap();
    t.evaluate(&builtin_properties(Variant::Ebia, false));
    let ks = kinds(&t);
    assert!(ks.contains(&EventKind::CASendsId));
    assert!(!ks.contains(&EventKind::UserReceivesId));
    assert!(!ks.contains(&EventKind::UserReceivesRegistrationData));
    assert!(!t.verdicts[0].verdict.holds());
    // The confirmation goes to whoever accessed the link.
    assert_eq!(t.steps[3].sent[0].dst.role, Role::Attacker);
}

#[test]
fn ebia_link_is_single_use() {
    let s = single_user(Variant::Ebia);
    let mut sched = ebia_attack(&s);
    sched.push(sched[3].clone());
    let t = run_scenario(&s, &sched).unwrap();
    assert!(t.steps[4].events.is_empty());
    assert!(t.steps[4].notes.iter().any(|n| n.contains("already used")));
}

fn no_sms_attack() -> Vec<Action> {
    let eve = PrincipalId::new(Role::Attacker, "eve");
    let alice = Term::name("alice@email.dom", 0);
    let session = SessionId::new("eve#1");
    let key = Term::key("k_uw/eve", 1);
    let ssl = |tag: Tag, body: Term| {
        ChannelMsg::new(
            Channel::Ssl(session.clone()),
            tag,
            eve.clone(),
            PrincipalId::ws(),
            chatsrp_core::crypto::sym_encrypt(body, key.clone()).unwrap(),
        )
    };
    let msg1 = ssl(Tag::Msg1, Term::tuple([Term::Tag(Tag::Msg1), alice.clone(), PrincipalId::ws().host()]));
    vec![Action::SslBypass { claim: alice }, Action::Inject { msg: msg1 }]
}

#[test]
fn without_sms_the_attacker_registers_as_someone_else() {
    let s = Scenario::default_for(Variant::ChatSrpNoSms);
    let mut sched = no_sms_attack();
    let mut t = run_scenario(&s, &sched).unwrap();
    // Drive the backend: deliver whatever honest traffic is pending, and use
    // the link and ticket the attacker reads from its own session.
    for _ in 0..10 {
        let k = t.final_knowledge();
        let pending: Vec<ChannelMsg> = {
            let mut w = chatsrp_core::harness::World::new(&s).unwrap();
            for a in &sched {
                w.apply(a).unwrap();
            }
            w.pool().to_vec()
        };
        let next = if let Some(m) = pending.into_iter().find(|m| m.channel == Channel::Public) {
            Action::Deliver { msg: m }
        } else {
            let link = k.analyzed().find(|t| t.label().is_some_and(|l| l.starts_with("link/"))).cloned();
            let ticket = k.analyzed().find(|t| matches!(t, Term::Hash(_))).cloned();
            match (link, ticket) {
                (Some(l), Some(tk)) if !sched.iter().any(|a| matches!(a, Action::Inject { msg } if msg.tag == Tag::Msg5)) => {
                    let eve = PrincipalId::new(Role::Attacker, "eve");
                    sched.push(Action::Inject {
                        msg: ChannelMsg::new(Channel::Public, Tag::Msg5, eve.clone(), PrincipalId::ws(), l.clone()),
                    });
                    let body = Term::tuple([
                        Term::Tag(Tag::Msg5),
                        Term::name("alice@email.dom", 0),
                        PrincipalId::ws().host(),
                        tk,
                        l,
                        Term::key("k/eve", 1),
                    ]);
                    Action::Inject {
                        msg: ChannelMsg::new(
                            Channel::Ssl(SessionId::new("eve#1")),
                            Tag::Msg5,
                            eve,
                            PrincipalId::ws(),
                            chatsrp_core::crypto::sym_encrypt(body, Term::key("k_uw/eve", 1)).unwrap(),
                        ),
                    }
                }
                _ => break,
            }
        };
        sched.push(next);
        t = run_scenario(&s, &sched).unwrap();
    }
    t.evaluate(&builtin_properties(Variant::ChatSrpNoSms, false));
    assert!(kinds(&t).contains(&EventKind::CASendsId), "{:#?}", t.steps);
    assert!(!kinds(&t).contains(&EventKind::UserRequestsRegistration));
    assert!(!t.verdict("issue-requires-request").unwrap().holds());
    assert!(!t.verdict("id-secrecy").unwrap().holds());
}

#[test]
fn with_sms_the_same_opening_stalls_at_the_code() {
    let s = Scenario::default_for(Variant::ChatSrp);
    let t = run_scenario(&s, &no_sms_attack()).unwrap();
    // The WS texts the real owner; the attacker never sees the code.
    assert_eq!(kinds(&t), [EventKind::WSSendsSMS]);
    let sms = &t.steps[1].sent[0];
    assert_eq!(sms.channel, Channel::Sms);
    assert_eq!(&*sms.dst.label, "alice");
    assert!(t.steps[1].learned.is_empty());
}

#[test]
fn diagnostic_query_fails_when_an_sms_is_triggered_by_someone_else() {
    let s = Scenario::default_for(Variant::ChatSrp);
    let mut t = run_scenario(&s, &no_sms_attack()).unwrap();
    t.evaluate(&builtin_properties(Variant::ChatSrp, true));
    assert!(!t.verdict(DIAGNOSTIC_PROPERTY).unwrap().holds());
    for name in ["id-secrecy", "id-enc-secrecy", "issue-requires-request", "receipt-requires-issue"] {
        assert!(t.verdict(name).unwrap().holds(), "{name}");
    }
}

#[test]
fn empty_schedule_gives_empty_trace() {
    let t = run_scenario(&Scenario::default_for(Variant::ChatSrp), &[]).unwrap();
    assert!(t.is_empty());
    assert!(t.events().is_empty());
}

#[test]
fn invalid_actions_are_reported_with_their_index() {
    let s = Scenario::default_for(Variant::ChatSrp);
    let start = Action::Start { user: "alice".into() };
    let err = run_scenario(&s, &[start.clone(), start]).unwrap_err();
    assert!(matches!(err, chatsrp_core::harness::HarnessError::InvalidActionAtStep { index: 1, .. }), "{err}");
    let err = run_scenario(&s, &[Action::Start { user: "mallory".into() }]).unwrap_err();
    assert!(matches!(err, chatsrp_core::harness::HarnessError::InvalidActionAtStep { index: 0, .. }));
    // Underivable injection: a ciphertext under an honest session key.
    let forged = ChannelMsg::new(
        Channel::Ssl(SessionId::new("alice#1")),
        Tag::Msg1,
        PrincipalId::new(Role::Attacker, "eve"),
        PrincipalId::ws(),
        chatsrp_core::crypto::sym_encrypt(Term::name("x", 0), Term::key("k_uw/alice", 1)).unwrap(),
    );
    assert!(run_scenario(&s, &[Action::Inject { msg: forged }]).is_err());
}

#[test]
fn traces_round_trip_through_json() {
    let t = honest(&Scenario::default_for(Variant::ChatSrp));
    let back = Trace::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.to_json(), t.to_json());
}
