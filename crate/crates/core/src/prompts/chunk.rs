//! Partitioning a story into contiguous chunks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::StrategyError;
use crate::types::{AnnotationSet, ProblemInstance};

/// Contiguous, ordered, disjoint ranges of 0-based sentence indices that
/// together cover the whole story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub boundaries: Vec<Range<usize>>,
}

impl ChunkPlan {
    /// As-even-as-possible split of `n` sentences into `t` chunks; the first
    /// `n % t` chunks take one extra sentence. `t` is clamped to `n`.
    pub fn uniform(n: usize, t: usize) -> Result<Self, StrategyError> {
        if n == 0 {
            return Err(StrategyError::EmptyProblem);
        }
        if t == 0 {
            return Err(StrategyError::InvalidConfig("splits must be >= 1".into()));
        }
        let t = t.min(n);
        let (base, extra) = (n / t, n % t);
        let mut start = 0;
        let boundaries = (0..t)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(ChunkPlan { boundaries })
    }

    /// Splits after each listed 1-based sentence number. Cuts are sorted and
    /// deduplicated; cuts at 0 or at/after `n` are ignored.
    pub fn after(n: usize, cuts: &[usize]) -> Result<Self, StrategyError> {
        if n == 0 {
            return Err(StrategyError::EmptyProblem);
        }
        let mut cuts: Vec<usize> = cuts.iter().copied().filter(|&c| c > 0 && c < n).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut start = 0;
        let mut boundaries = Vec::with_capacity(cuts.len() + 1);
        for c in cuts {
            boundaries.push(start..c);
            start = c;
        }
        boundaries.push(start..n);
        Ok(ChunkPlan { boundaries })
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.boundaries.iter().map(|r| r.len()).collect()
    }

    /// 1-based numbers of the last sentence in each chunk but the final one.
    pub fn cuts(&self) -> Vec<usize> {
        let k = self.boundaries.len().saturating_sub(1);
        self.boundaries[..k].iter().map(|r| r.end).collect()
    }
}

/// Uniform plan for a problem.
pub fn split_sentences(p: &ProblemInstance, t: usize) -> Result<ChunkPlan, StrategyError> {
    ChunkPlan::uniform(p.sentences.len(), t)
}

/// One chunk per state change of the question's target object: each chunk
/// ends on a sentence that changes its configuration.
pub fn event_aligned(p: &ProblemInstance, a: &AnnotationSet) -> Result<ChunkPlan, StrategyError> {
    let cuts: Vec<usize> = a
        .events
        .iter()
        .filter(|e| e.object_id == a.question_object_id)
        .map(|e| e.boundary_after_sentence)
        .collect();
    ChunkPlan::after(p.sentences.len(), &cuts)
}

/// Numbered story lines (`"i. text"`) for one range, joined by newlines.
pub fn render_chunk(p: &ProblemInstance, range: Range<usize>) -> String {
    p.sentences[range]
        .iter()
        .map(|s| format!("{}. {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}
