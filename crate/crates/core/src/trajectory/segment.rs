//! Splits a free-text reasoning trace into steps.
//!
//! Rules, applied in order:
//! 1. runs of newlines collapse to a single newline;
//! 2. the text splits on newlines;
//! 3. one left-to-right pass merges every segment with fewer than
//!    `min_words` words into the step before it, except that a short first
//!    step keeps absorbing its successors until it is long enough;
//! 4. steps beyond `max_steps` are concatenated into the last step.
//!
//! Merged pieces are rejoined with a single newline, so joining the steps
//! with newlines gives back the collapsed text. A word is a maximal run of
//! non-whitespace characters.

use serde::{Deserialize, Serialize};

use super::TrajectoryError;

pub const DEFAULT_MIN_WORDS: usize = 30;
/// Step cap for offline data pipelines.
pub const MAX_STEPS_OFFLINE: usize = 15;
/// Step cap for online training.
pub const MAX_STEPS_ONLINE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub max_steps: usize,
    pub min_words: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            max_steps: MAX_STEPS_OFFLINE,
            min_words: DEFAULT_MIN_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedTrace {
    pub raw_text: String,
    pub steps: Vec<String>,
    pub params: SegmentParams,
    /// Set when the input holds no words at all.
    pub degenerate: bool,
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn collapse_newlines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_newline = false;
    for c in text.chars() {
        if c == '\n' {
            if !prev_newline {
                out.push(c);
            }
            prev_newline = true;
        } else {
            out.push(c);
            prev_newline = false;
        }
    }
    out
}

pub fn segment_text(text: &str, params: SegmentParams) -> Result<SegmentedTrace, TrajectoryError> {
    if params.max_steps == 0 {
        return Err(TrajectoryError::InvalidParams("max_steps must be at least 1".into()));
    }
    let collapsed = collapse_newlines(text);
    let mut steps: Vec<String> = Vec::new();
    for piece in collapsed.split('\n') {
        let absorb = match steps.len() {
            0 => false,
            1 => word_count(&steps[0]) < params.min_words || word_count(piece) < params.min_words,
            _ => word_count(piece) < params.min_words,
        };
        if absorb {
            let last = steps.last_mut().expect("non-empty");
            last.push('\n');
            last.push_str(piece);
        } else {
            steps.push(piece.to_string());
        }
    }
    if steps.len() > params.max_steps {
        let tail = steps.split_off(params.max_steps - 1).join("\n");
        steps.push(tail);
    }
    Ok(SegmentedTrace {
        raw_text: text.to_string(),
        degenerate: word_count(&collapsed) == 0,
        steps,
        params,
    })
}

/// Newline-joins the steps of a trace.
pub fn join_steps(trace: &SegmentedTrace) -> String {
    trace.steps.join("\n")
}
