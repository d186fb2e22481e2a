#![allow(dead_code)]

use std::sync::Arc;

use arena_core::ranking::PolicyId;
use arena_service::*;
use chrono::{TimeZone, Utc};

pub fn gold() -> QuizConfig {
    let answers = [Choice::Left, Choice::Right, Choice::Tie, Choice::Left, Choice::Left,
        Choice::Right, Choice::Right, Choice::Tie, Choice::Left, Choice::Right];
    QuizConfig {
        pairs: answers
            .iter()
            .enumerate()
            .map(|(g, &correct)| GoldPair {
                left_uri: format!("gold/{g}/left.mp4"),
                right_uri: format!("gold/{g}/right.mp4"),
                correct,
            })
            .collect(),
    }
}

pub fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap()))
}

pub fn arena_with(log: EventLog, clock: Arc<ManualClock>, seed: u64) -> Arena {
    let config = ArenaConfig { seed, ..ArenaConfig::new(gold()) };
    Arena::open(config, clock, log).unwrap()
}

pub fn arena(seed: u64) -> Arena {
    arena_with(EventLog::in_memory(), clock(), seed)
}

/// Answers derived from the question URIs; the first `wrong` are spoiled.
pub fn answers(paper: &QuizPaper, wrong: usize) -> Vec<Choice> {
    let cfg = gold();
    paper
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let g: usize = q.left_uri.split('/').nth(1).unwrap().parse().unwrap();
            let right = cfg.pairs[g].correct;
            if i < wrong {
                match right {
                    Choice::Left => Choice::Right,
                    _ => Choice::Left,
                }
            } else {
                right
            }
        })
        .collect()
}

pub fn qualify(arena: &mut Arena, who: &str) -> String {
    let paper = arena.start_quiz(who).unwrap();
    let result = arena.quiz_evaluate(who, &answers(&paper, 2)).unwrap();
    assert!(result.state.passed);
    result.token.unwrap()
}

pub fn pid(s: &str) -> PolicyId {
    PolicyId::new(s).unwrap()
}

pub fn execution(policy: &str, env: &str, ic: &str) -> NewExecution {
    NewExecution {
        policy: pid(policy),
        environment_id: env.into(),
        task: "put the carrot on the plate".into(),
        perturbation: None,
        video_uri: format!("videos/{env}/{ic}/{}.mp4", policy.len()),
        initial_condition_hash: ic.into(),
        frame_scores: None,
    }
}
