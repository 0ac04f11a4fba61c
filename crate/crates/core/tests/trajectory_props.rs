//! Step segmentation and the JSON-lines record format.

mod common;

use gpo_core::advantage::{advantage_profile, AdvantageMode};
use gpo_core::mdp::{pivotal_chain, sample_trajectory, SoftmaxPolicy};
use gpo_core::trajectory::{
    from_jsonl, join_steps, read_records, segment_text, to_jsonl, write_records, Record, SegmentParams, TrajectoryError,
};
use proptest::prelude::*;

use common::random_policy;

/// Collapses newline runs by repeated replacement.
fn collapse(text: &str) -> String {
    let mut s = text.to_string();
    while s.contains("\n\n") {
        s = s.replace("\n\n", "\n");
    }
    s
}

fn words(s: &str) -> usize {
    s.split_whitespace().count()
}

fn text_strategy() -> impl Strategy<Value = String> {
    let line = prop::collection::vec(prop_oneof![Just("w"), Just("longer"), Just("x,y"), Just("é")], 0..12)
        .prop_map(|ws| ws.join(" "));
    prop::collection::vec((line, 1usize..4), 0..25).prop_map(|lines| {
        lines
            .into_iter()
            .map(|(l, breaks)| format!("{l}{}", "\n".repeat(breaks)))
            .collect::<String>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn segmentation_preserves_collapsed_text(text in text_strategy(), min_words in 0usize..8, max_steps in 1usize..16) {
        let t = segment_text(&text, SegmentParams { max_steps, min_words }).unwrap();
        prop_assert_eq!(join_steps(&t), collapse(&text));
        prop_assert!(t.steps.len() <= max_steps && !t.steps.is_empty());
        prop_assert_eq!(t.degenerate, words(&text) == 0);
    }

    #[test]
    fn every_step_is_long_enough_once_there_are_two(text in text_strategy(), min_words in 0usize..8, max_steps in 1usize..16) {
        let t = segment_text(&text, SegmentParams { max_steps, min_words }).unwrap();
        if t.steps.len() >= 2 {
            for s in &t.steps {
                prop_assert!(words(s) >= min_words, "{:?}", t.steps);
            }
        }
    }

    #[test]
    fn cap_concatenates_the_overflow(text in text_strategy(), min_words in 0usize..8, max_steps in 1usize..8) {
        let free = segment_text(&text, SegmentParams { max_steps: usize::MAX, min_words }).unwrap();
        let capped = segment_text(&text, SegmentParams { max_steps, min_words }).unwrap();
        if free.steps.len() <= max_steps {
            prop_assert_eq!(&capped.steps, &free.steps);
        } else {
            prop_assert_eq!(&capped.steps[..max_steps - 1], &free.steps[..max_steps - 1]);
            prop_assert_eq!(capped.steps.last().unwrap(), &free.steps[max_steps - 1..].join("\n"));
        }
    }

    #[test]
    fn resegmenting_the_joined_steps_is_idempotent(text in text_strategy(), min_words in 0usize..8, max_steps in 1usize..16) {
        let params = SegmentParams { max_steps, min_words };
        let once = segment_text(&text, params).unwrap();
        let twice = segment_text(&join_steps(&once), params).unwrap();
        prop_assert_eq!(once.steps, twice.steps);
    }

    #[test]
    fn records_round_trip(seed in any::<u64>()) {
        let mdp = pivotal_chain::<f64>(6, 3, 2, 0.3).unwrap();
        let policy = random_policy(&mdp, 1.0, &mut gpo_core::rng::Stream::new(seed));
        let traj = sample_trajectory(&mdp, &policy, seed);
        let profile = advantage_profile(&mdp, &policy, &traj, AdvantageMode::MonteCarlo { n_samples: 3 }, seed).unwrap();
        let records = vec![Record::Trajectory(traj), Record::AdvantageProfile(profile)];
        let text = to_jsonl(&records).unwrap();
        prop_assert_eq!(text.lines().count(), 2);
        prop_assert_eq!(from_jsonl::<f64>(&text).unwrap(), records);
    }
}

#[test]
fn records_survive_a_file_round_trip_and_corruption_is_located() {
    let mdp = pivotal_chain::<f64>(4, 2, 1, 0.2).unwrap();
    let policy = SoftmaxPolicy::uniform_for(&mdp);
    let records: Vec<Record<f64>> = (0..100)
        .map(|k| Record::Trajectory(sample_trajectory(&mdp, &policy, k)))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    assert_eq!(write_records(&path, &records).unwrap(), 100);
    assert_eq!(read_records::<f64>(&path).unwrap(), records);

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[41] = lines[41].replace("\"h\":1", "\"h\":3");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match read_records::<f64>(&path) {
        Err(TrajectoryError::Line { line, .. }) => assert_eq!(line, 42),
        other => panic!("expected a line error, got {other:?}"),
    }
}
