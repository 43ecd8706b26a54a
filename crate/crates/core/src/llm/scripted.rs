use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{last_user_text, ChatMessage, ChatProvider, CompletionParams, ProviderError};

/// One fixture line: reply with `reply` when the last user message
/// contains `match`. `"*"` matches anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: String,
    pub reply: String,
}

impl ScriptEntry {
    pub fn new(matcher: impl Into<String>, reply: impl Into<String>) -> Self {
        ScriptEntry { matcher: matcher.into(), reply: reply.into() }
    }

    pub fn any(reply: impl Into<String>) -> Self {
        ScriptEntry::new("*", reply)
    }

    fn matches(&self, text: &str) -> bool {
        self.matcher == "*" || text.contains(&self.matcher)
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    consumed: Vec<bool>,
    prompts: Vec<String>,
}

/// Deterministic replay provider. Each call consumes the first unconsumed
/// entry that matches; entries are never reused.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        ScriptedProvider { entries, state: Mutex::new(ScriptState { consumed, prompts: Vec::new() }) }
    }

    /// Replies to every call in order, regardless of the prompt.
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedProvider::new(replies.into_iter().map(ScriptEntry::any).collect())
    }

    /// Parses line-JSON `{"match": .., "reply": ..}` entries. Blank lines are skipped.
    pub fn from_jsonl(input: impl BufRead) -> Result<Self, ProviderError> {
        let mut entries = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ProviderError::Other(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| ProviderError::Other(format!("script line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        Ok(ScriptedProvider::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ProviderError::Other(format!("cannot open script {}: {e}", path.display())))?;
        Self::from_jsonl(std::io::BufReader::new(file))
    }

    fn state(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Number of calls answered so far.
    pub fn calls(&self) -> usize {
        self.state().prompts.len()
    }

    /// Last user message of every answered call, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.state().prompts.clone()
    }

    pub fn remaining(&self) -> usize {
        self.state().consumed.iter().filter(|c| !**c).count()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, messages: &[ChatMessage], _params: &CompletionParams) -> Result<String, ProviderError> {
        let text = last_user_text(messages);
        let mut state = self.state();
        let idx = self
            .entries
            .iter()
            .enumerate()
            .position(|(i, e)| !state.consumed[i] && e.matches(text))
            .ok_or(ProviderError::ScriptExhausted)?;
        state.consumed[idx] = true;
        state.prompts.push(text.to_string());
        Ok(self.entries[idx].reply.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::complete_prompt;

    #[test]
    fn wildcard_then_exhausted() {
        let p = ScriptedProvider::new(vec![ScriptEntry::any("hello")]);
        assert_eq!(complete_prompt(&p, "x".into()).unwrap(), "hello");
        assert_eq!(complete_prompt(&p, "x".into()), Err(ProviderError::ScriptExhausted));
        assert_eq!(ProviderError::ScriptExhausted.to_string(), "script exhausted");
        assert_eq!(p.calls(), 1);
    }

    #[test]
    fn first_unconsumed_match_wins() {
        let p = ScriptedProvider::new(vec![
            ScriptEntry::new("critic", "Yes"),
            ScriptEntry::new("plan", "P1"),
            ScriptEntry::any("fallback"),
            ScriptEntry::new("plan", "P2"),
        ]);
        assert_eq!(complete_prompt(&p, "make a plan".into()).unwrap(), "P1");
        assert_eq!(complete_prompt(&p, "make a plan".into()).unwrap(), "fallback");
        assert_eq!(complete_prompt(&p, "make a plan".into()).unwrap(), "P2");
        assert_eq!(complete_prompt(&p, "you are a critic".into()).unwrap(), "Yes");
        assert_eq!(p.remaining(), 0);
    }

    #[test]
    fn parses_line_json() {
        let src = "{\"match\":\"*\",\"reply\":\"a\"}\n\n{\"match\":\"b\",\"reply\":\"c\"}\n";
        let p = ScriptedProvider::from_jsonl(src.as_bytes()).unwrap();
        assert_eq!(p.remaining(), 2);
        assert!(ScriptedProvider::from_jsonl("{bad".as_bytes()).is_err());
    }
}
