//! Pulling the final answer out of model output.

use serde::{Deserialize, Serialize};

use crate::types::normalize_answer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub raw: String,
    pub answer: String,
    pub found_tags: bool,
}

const OPEN: &str = "<answer>";
const CLOSE: &str = "</answer>";

/// Takes the innermost complete `<answer>…</answer>` span: the first closing
/// tag paired with the nearest opening tag before it. Tag matching ignores
/// ASCII case. Without a complete span the last non-empty line is used.
pub fn extract_answer(text: &str) -> ExtractedAnswer {
    let lower = text.to_ascii_lowercase();
    let mut search_from = 0;
    while let Some(rel) = lower[search_from..].find(CLOSE) {
        let close = search_from + rel;
        if let Some(open) = lower[..close].rfind(OPEN) {
            let inner = &text[open + OPEN.len()..close];
            return ExtractedAnswer {
                raw: text.to_string(),
                answer: normalize_answer(inner),
                found_tags: true,
            };
        }
        search_from = close + CLOSE.len();
    }
    let fallback = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("");
    ExtractedAnswer {
        raw: text.to_string(),
        answer: normalize_answer(fallback),
        found_tags: false,
    }
}
