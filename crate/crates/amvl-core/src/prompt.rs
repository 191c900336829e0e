//! Prompt assembly, the whitespace tokenizer and a deterministic mock answerer.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embed::stable_hash;

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You are a helpful assistant. Answer using the memories provided below when they are relevant.";

/// Number of maximal non-whitespace runs.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub system_prompt: String,
    pub recent_conversation: Vec<String>,
    /// Similarity-descending `(id, content)` pairs.
    pub injected: Vec<(u64, String)>,
    pub token_count: usize,
}

impl PromptContext {
    pub fn assemble(system_prompt: &str, recent: Vec<String>, injected: Vec<(u64, String)>, query: &str) -> Self {
        let mut p = PromptContext {
            system_prompt: system_prompt.into(),
            recent_conversation: recent,
            injected,
            token_count: 0,
        };
        p.token_count = count_tokens(&p.render(query));
        p
    }

    /// The prompt text as it would be sent to a model.
    pub fn render(&self, query: &str) -> String {
        let mut s = String::new();
        s.push_str(&self.system_prompt);
        s.push_str("\n\n[conversation]\n");
        for turn in &self.recent_conversation {
            s.push_str(turn);
            s.push('\n');
        }
        s.push_str("\n[memories]\n");
        for (id, content) in &self.injected {
            s.push_str(&format!("#{id} {content}\n"));
        }
        s.push_str("\n[question]\n");
        s.push_str(query);
        s
    }

    pub fn citations(&self) -> Vec<u64> {
        self.injected.iter().map(|(id, _)| *id).collect()
    }
}

/// Fixed-form answer naming the injected ids and a digest of the prompt.
pub fn mock_answer(prompt: &PromptContext, query: &str) -> String {
    let digest = stable_hash(&prompt.render(query));
    if prompt.injected.is_empty() {
        return format!("No stored memories apply. [digest {digest:016x}]");
    }
    let refs: Vec<String> = prompt.injected.iter().map(|(id, _)| format!("#{id}")).collect();
    format!("Based on memories {}. [digest {digest:016x}]", refs.join(", "))
}

/// Last `capacity` asks per namespace.
#[derive(Debug, Clone, Default)]
pub struct ConversationBuffer {
    capacity: usize,
    turns: BTreeMap<String, VecDeque<String>>,
}

impl ConversationBuffer {
    pub fn new(capacity: usize) -> Self {
        ConversationBuffer { capacity, turns: BTreeMap::new() }
    }

    pub fn recent(&self, namespace: &str) -> Vec<String> {
        self.turns.get(namespace).map(|q| q.iter().cloned().collect()).unwrap_or_default()
    }

    pub fn push(&mut self, namespace: &str, text: &str) {
        if self.capacity == 0 {
            return;
        }
        let q = self.turns.entry(namespace.into()).or_default();
        q.push_back(text.into());
        while q.len() > self.capacity {
            q.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokens_are_whitespace_runs() {
        assert_eq!(count_tokens("  a bb\tccc\n\nd "), 4);
        assert_eq!(count_tokens(""), 0);
    }

    #[test]
    fn token_count_covers_whole_prompt() {
        let p = PromptContext::assemble("sys one", vec!["hi there".into()], vec![(3, "x y".into())], "q?");
        assert_eq!(p.token_count, count_tokens(&p.render("q?")));
        assert_eq!(p.citations(), vec![3]);
    }

    #[test]
    fn answers_are_deterministic() {
        let p = PromptContext::assemble("sys", vec![], vec![(1, "a".into()), (2, "b".into())], "q");
        assert_eq!(mock_answer(&p, "q"), mock_answer(&p, "q"));
        assert!(mock_answer(&p, "q").contains("#1, #2"));
        let empty = PromptContext::assemble("sys", vec![], vec![], "q");
        assert!(empty.citations().is_empty());
    }

    #[test]
    fn conversation_ring() {
        let mut c = ConversationBuffer::new(2);
        for t in ["a", "b", "c"] {
            c.push("ns", t);
        }
        assert_eq!(c.recent("ns"), vec![String::from("b"), String::from("c")]);
        assert!(c.recent("other").is_empty());
    }
}
