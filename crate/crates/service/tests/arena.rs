mod common;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Barrier};

use arena_core::perturb::PerturbationSpec;
use arena_core::ranking::{Outcome, RankingError};
use arena_service::*;
use chrono::Duration;
use common::*;

fn two_policy_arena(seed: u64) -> (Arena, String, String) {
    let mut a = arena(seed);
    a.register_policy(pid("alpha")).unwrap();
    a.register_policy(pid("beta")).unwrap();
    let (x, _) = a.register_execution(execution("alpha", "kitchen", "ic-1")).unwrap();
    let (y, _) = a.register_execution(execution("beta", "kitchen", "ic-1")).unwrap();
    (a, x, y)
}

#[test]
fn execution_registration_is_idempotent() {
    let (mut a, x, y) = two_policy_arena(0);
    assert_ne!(x, y);
    let events = a.log().len();
    let (again, created) = a.register_execution(execution("alpha", "kitchen", "ic-1")).unwrap();
    assert_eq!((again.as_str(), created), (x.as_str(), false));
    assert_eq!(a.log().len(), events);
    assert!(!a.register_policy(pid("alpha")).unwrap());
}

#[test]
fn execution_validation() {
    let mut a = arena(0);
    assert!(matches!(
        a.register_execution(execution("ghost", "kitchen", "ic")),
        Err(ServiceError::InvalidArgument(_))
    ));
    a.register_policy(pid("ghost")).unwrap();
    let mut e = execution("ghost", "kitchen", "ic");
    e.video_uri = " ".into();
    assert!(a.register_execution(e).is_err());
}

#[test]
fn quiz_threshold_is_inclusive() {
    let mut a = arena(0);
    for (who, wrong, pass) in [("ten", 0, true), ("eight", 2, true), ("seven", 3, false)] {
        let paper = a.start_quiz(who).unwrap();
        assert_eq!(paper.questions.len(), 10);
        let res = a.quiz_evaluate(who, &answers(&paper, wrong)).unwrap();
        assert_eq!(res.state.passed, pass, "{who}");
        assert_eq!(res.state.correct_count(), 10 - wrong);
        assert_eq!(res.token.is_some(), pass);
        assert_eq!(a.is_qualified(who), pass);
    }
    assert!(a.quiz_evaluate("seven", &[Choice::Tie; 10]).is_err(), "no open attempt");
    let paper = a.start_quiz("seven").unwrap();
    assert!(a.quiz_evaluate("seven", &[Choice::Tie; 9]).is_err());
    assert_eq!(paper.attempt, 2);
    assert!(a.quiz_evaluate("seven", &answers(&paper, 0)).unwrap().state.passed);
}

#[test]
fn retakes_get_fresh_orderings() {
    let mut a = arena(5);
    let orders: HashSet<Vec<String>> = (0..5)
        .map(|_| {
            let p = a.start_quiz("x").unwrap();
            p.questions.iter().map(|q| q.left_uri.clone()).collect()
        })
        .collect();
    assert!(orders.len() > 1);
}

#[test]
fn tokens_authenticate_their_annotator() {
    let mut a = arena(0);
    let token = qualify(&mut a, "ann");
    assert_eq!(a.authenticate(&token), Some("ann"));
    assert_eq!(a.authenticate("nope"), None);
    // Only a hash of the token is persisted.
    let log = serde_json::to_string(&a.log().entries()).unwrap();
    assert!(!log.contains(&token));
}

#[test]
fn unqualified_annotators_get_no_pairs() {
    let (mut a, _, _) = two_policy_arena(0);
    assert!(matches!(a.next_pair("stranger"), Err(ServiceError::NotQualified)));
}

#[test]
fn single_pair_then_exhausted() {
    let (mut a, x, y) = two_policy_arena(0);
    qualify(&mut a, "ann");
    let p = a.next_pair("ann").unwrap();
    let ids: HashSet<_> = [p.left.execution_id.clone(), p.right.execution_id.clone()].into();
    assert_eq!(ids, [x, y].into());
    assert!(p.blinded);
    assert!(matches!(a.next_pair("ann"), Err(ServiceError::NoPairsAvailable)));
    a.submit_preference(&p.pair_id, "ann", Choice::Left, "cleaner grasp").unwrap();
    assert!(matches!(a.next_pair("ann"), Err(ServiceError::NoPairsAvailable)));
}

#[test]
fn only_matching_conditions_are_paired() {
    let mut a = arena(0);
    for p in ["alpha", "beta"] {
        a.register_policy(pid(p)).unwrap();
    }
    a.register_execution(execution("alpha", "kitchen", "ic-1")).unwrap();
    a.register_execution(execution("beta", "kitchen", "ic-2")).unwrap();
    a.register_execution(execution("alpha", "sink", "ic-1")).unwrap();
    let mut perturbed = execution("beta", "sink", "ic-1");
    perturbed.perturbation = Some(PerturbationSpec::Color { alpha: 0.33 });
    a.register_execution(perturbed).unwrap();
    qualify(&mut a, "ann");
    assert!(matches!(a.next_pair("ann"), Err(ServiceError::NoPairsAvailable)));
}

#[test]
fn blinding_inverse_maps_choices() {
    // Find seeds where the coin puts each policy on the left.
    let mut seen = HashMap::new();
    for seed in 0..40 {
        let (mut a, x, _) = two_policy_arena(seed);
        qualify(&mut a, "ann");
        let p = a.next_pair("ann").unwrap();
        let alpha_left = p.left.execution_id == x;
        if seen.contains_key(&alpha_left) {
            continue;
        }
        let rec = a.submit_preference(&p.pair_id, "ann", Choice::Left, "faster").unwrap();
        assert_eq!((rec.policy_a.as_str(), rec.policy_b.as_str()), ("alpha", "beta"));
        seen.insert(alpha_left, rec.outcome);
    }
    assert_eq!(seen[&true], Outcome::PreferA);
    assert_eq!(seen[&false], Outcome::PreferB);

    let (mut a, _, _) = two_policy_arena(1);
    qualify(&mut a, "ann");
    let p = a.next_pair("ann").unwrap();
    assert_eq!(a.submit_preference(&p.pair_id, "ann", Choice::Tie, "same").unwrap().outcome, Outcome::Tie);
}

#[test]
fn submission_errors() {
    let (mut a, _, _) = two_policy_arena(0);
    qualify(&mut a, "ann");
    qualify(&mut a, "bob");
    let p = a.next_pair("ann").unwrap();
    assert!(matches!(a.submit_preference(&p.pair_id, "ann", Choice::Left, "  \n"), Err(ServiceError::RationaleRequired)));
    assert!(matches!(a.submit_preference("pair-x", "ann", Choice::Left, "r"), Err(ServiceError::InvalidPair(_))));
    assert!(matches!(a.submit_preference(&p.pair_id, "bob", Choice::Left, "r"), Err(ServiceError::InvalidPair(_))));
    a.submit_preference(&p.pair_id, "ann", Choice::Right, "r").unwrap();
    assert!(matches!(a.submit_preference(&p.pair_id, "ann", Choice::Left, "r"), Err(ServiceError::AlreadyJudged)));
}

#[test]
fn expired_pairs_are_rejected_and_return_to_pool() {
    let clock = clock();
    let (mut a, _, _) = {
        let mut a = arena_with(EventLog::in_memory(), clock.clone(), 0);
        a.register_policy(pid("alpha")).unwrap();
        a.register_policy(pid("beta")).unwrap();
        let (x, _) = a.register_execution(execution("alpha", "kitchen", "ic-1")).unwrap();
        let (y, _) = a.register_execution(execution("beta", "kitchen", "ic-1")).unwrap();
        (a, x, y)
    };
    qualify(&mut a, "ann");
    qualify(&mut a, "bob");
    let p = a.next_pair("ann").unwrap();
    clock.advance(Duration::seconds(a.config().pair_ttl_seconds + 1));
    assert!(matches!(a.submit_preference(&p.pair_id, "ann", Choice::Left, "r"), Err(ServiceError::InvalidPair(_))));
    // Another annotator can still receive the same executions.
    let q = a.next_pair("bob").unwrap();
    assert_ne!(q.pair_id, p.pair_id);
}

#[test]
fn least_judged_pair_is_preferred() {
    // Two eligible pairs; one already has 5 judgments.
    let mut a = arena(3);
    for p in ["alpha", "beta", "gamma", "delta"] {
        a.register_policy(pid(p)).unwrap();
    }
    let (x1, _) = a.register_execution(execution("alpha", "kitchen", "ic-1")).unwrap();
    let (y1, _) = a.register_execution(execution("beta", "kitchen", "ic-1")).unwrap();
    let (x2, _) = a.register_execution(execution("gamma", "sink", "ic-2")).unwrap();
    let (y2, _) = a.register_execution(execution("delta", "sink", "ic-2")).unwrap();
    for k in 0..5 {
        let who = format!("warmup-{k}");
        qualify(&mut a, &who);
        loop {
            let p = a.next_pair(&who).unwrap();
            let hot = [p.left.execution_id.as_str(), p.right.execution_id.as_str()].contains(&x1.as_str());
            if hot {
                a.submit_preference(&p.pair_id, &who, Choice::Left, "warm-up").unwrap();
                break;
            }
        }
    }
    // The kitchen pair now has 5 judgments and the sink pair 0.
    assert_eq!(a.judgment_count(&x1, &y1), 5);
    assert_eq!(a.judgment_count(&x2, &y2), 0);
    let mut cold = 0;
    for k in 0..1000 {
        let who = format!("ann-{k}");
        qualify(&mut a, &who);
        let p = a.next_pair(&who).unwrap();
        if [p.left.execution_id.as_str(), p.right.execution_id.as_str()].contains(&x2.as_str()) {
            cold += 1;
        }
    }
    assert_eq!(cold, 1000);
}

#[test]
fn assignments_respect_pairing_invariants() {
    let mut a = arena(9);
    for p in ["a", "b", "c"] {
        a.register_policy(pid(p)).unwrap();
    }
    for env in ["kitchen", "sink"] {
        for p in ["a", "b", "c"] {
            a.register_execution(execution(p, env, "ic")).unwrap();
        }
    }
    for k in 0..4 {
        let who = format!("ann-{k}");
        qualify(&mut a, &who);
        while let Ok(p) = a.next_pair(&who) {
            a.submit_preference(&p.pair_id, &who, Choice::Left, "ok").unwrap();
        }
    }
    let mut per_annotator = HashSet::new();
    let mut count = 0;
    for p in a.assignments() {
        let (l, r) = (a.execution(&p.left).unwrap(), a.execution(&p.right).unwrap());
        assert_eq!(l.spec.environment_id, r.spec.environment_id);
        assert_eq!(l.spec.task, r.spec.task);
        assert_eq!(l.spec.initial_condition_hash, r.spec.initial_condition_hash);
        assert_eq!(l.spec.perturbation, r.spec.perturbation);
        assert_ne!(l.spec.policy, r.spec.policy);
        let mut key = [p.left.clone(), p.right.clone()];
        key.sort();
        assert!(per_annotator.insert((p.annotator.clone(), key)));
        count += 1;
    }
    // 2 environments × 3 pairs, each annotator sees all of them once.
    assert_eq!(count, 4 * 6);
}

#[test]
fn blind_sides_are_balanced() {
    let (mut a, x, _) = two_policy_arena(2024);
    let n = 10_000;
    let mut alpha_left = 0;
    for k in 0..n {
        let who = format!("ann-{k}");
        qualify(&mut a, &who);
        if a.next_pair(&who).unwrap().left.execution_id == x {
            alpha_left += 1;
        }
    }
    let freq = alpha_left as f64 / n as f64;
    assert!((freq - 0.5).abs() <= 0.02, "{freq}");
}

#[test]
fn leaderboard_orders_and_filters() {
    let mut a = arena(0);
    for p in ["A", "B", "C"] {
        a.register_policy(pid(p)).unwrap();
    }
    a.register_execution(execution("A", "kitchen", "ic")).unwrap();
    a.register_execution(execution("B", "kitchen", "ic")).unwrap();
    a.register_execution(execution("B", "sink", "ic")).unwrap();
    a.register_execution(execution("C", "sink", "ic")).unwrap();
    assert!(matches!(
        a.leaderboard(&LeaderboardFilter::default()),
        Err(ServiceError::Ranking(RankingError::EmptyDecisiveSet))
    ));
    let judge = |a: &mut Arena, who: &str, env: &str, winner: &str| {
        qualify(a, who);
        let p = loop {
            let p = a.next_pair(who).unwrap();
            if p.environment_id == env {
                break p;
            }
        };
        let left_policy = a.execution(&p.left.execution_id).unwrap().spec.policy.clone();
        let choice = if left_policy.as_str() == winner { Choice::Left } else { Choice::Right };
        a.submit_preference(&p.pair_id, who, choice, "because").unwrap();
    };
    for (k, w) in ["A", "A", "A", "B"].iter().enumerate() {
        judge(&mut a, &format!("k{k}"), "kitchen", w);
    }
    for (k, w) in ["C", "B"].iter().enumerate() {
        judge(&mut a, &format!("s{k}"), "sink", w);
    }
    let kitchen = a
        .leaderboard(&LeaderboardFilter { environment: Some("kitchen".into()), perturbation: None })
        .unwrap();
    let names: Vec<_> = kitchen.board.entries.iter().map(|e| e.policy.as_str()).collect();
    assert_eq!(names, ["A", "B"]);
    let d = kitchen.board.entries[0].beta - kitchen.board.entries[1].beta;
    assert!((d - 3f64.ln()).abs() < 1e-8);
    let all = a.leaderboard(&LeaderboardFilter::default()).unwrap();
    assert_eq!(all.board.entries.len(), 3);
    assert!(a
        .leaderboard(&LeaderboardFilter { environment: None, perturbation: Some("WIND".into()) })
        .is_err());
    let none = a.leaderboard(&LeaderboardFilter { environment: None, perturbation: Some("none".into()) }).unwrap();
    assert_eq!(none.board.entries.len(), 3);
}

#[test]
fn replay_rebuilds_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let clock = clock();
    let payload = {
        let mut a = arena_with(EventLog::open(&path).unwrap(), clock.clone(), 4);
        for p in ["A", "B"] {
            a.register_policy(pid(p)).unwrap();
        }
        a.register_execution(execution("A", "kitchen", "ic")).unwrap();
        a.register_execution(execution("B", "kitchen", "ic")).unwrap();
        for (k, left_wins) in [true, false, true, true].into_iter().enumerate() {
            let who = format!("ann-{k}");
            qualify(&mut a, &who);
            let p = a.next_pair(&who).unwrap();
            let c = if left_wins { Choice::Left } else { Choice::Right };
            a.submit_preference(&p.pair_id, &who, c, "why").unwrap();
        }
        a.leaderboard(&LeaderboardFilter::default()).unwrap()
    };
    let text = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["type"], "policy_registered");
    assert_eq!(first["seq"], 1);
    assert!(first["payload"]["policy"].is_string());
    assert!(first["timestamp"].is_string());

    let replayed = arena_with(EventLog::open(&path).unwrap(), clock, 4);
    assert_eq!(replayed.leaderboard(&LeaderboardFilter::default()).unwrap(), payload);
    assert_eq!(replayed.log().entries(), read_entries(&path).unwrap());
    let token_holder = replayed.is_qualified("ann-0");
    assert!(token_holder);
}

#[test]
fn corrupt_logs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    std::fs::write(&path, "{\"type\":\"policy_registered\",\"payload\":{\"policy\":\"A\"},\"seq\":2,\"timestamp\":\"2025-01-01T00:00:00Z\"}\n").unwrap();
    assert!(matches!(EventLog::open(&path), Err(ServiceError::Corrupt(_))));
    std::fs::write(&path, "not json\n").unwrap();
    assert!(matches!(EventLog::open(&path), Err(ServiceError::Corrupt(_))));
}

#[test]
fn concurrent_duplicate_submissions_record_once() {
    let (mut a, _, _) = two_policy_arena(0);
    qualify(&mut a, "ann");
    let p = a.next_pair("ann").unwrap();
    let shared = SharedArena::new(a);
    let before = shared.lock().log().len();
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let s = shared.clone();
            let b = barrier.clone();
            let id = p.pair_id.clone();
            std::thread::spawn(move || {
                b.wait();
                s.lock().submit_preference(&id, "ann", Choice::Left, "same time")
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert_eq!(results.iter().filter(|r| matches!(r, Err(ServiceError::AlreadyJudged))).count(), 7);
    assert_eq!(shared.lock().log().len(), before + 1);
}

#[test]
fn shared_leaderboard_is_cached_by_log_length() {
    let (mut a, _, _) = two_policy_arena(0);
    for k in 0..2 {
        let who = format!("ann-{k}");
        qualify(&mut a, &who);
        let p = a.next_pair(&who).unwrap();
        a.submit_preference(&p.pair_id, &who, if k == 0 { Choice::Left } else { Choice::Right }, "r").unwrap();
    }
    let shared = SharedArena::new(a);
    let f = LeaderboardFilter::default();
    let one = shared.leaderboard(&f).unwrap();
    let two = shared.leaderboard(&f).unwrap();
    assert!(Arc::ptr_eq(&one, &two));
    shared.lock().register_policy(pid("late")).unwrap();
    let three = shared.leaderboard(&f).unwrap();
    assert!(!Arc::ptr_eq(&one, &three));
    assert_eq!(three.log_length, one.log_length + 1);
}
