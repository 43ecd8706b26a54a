use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::profile::{extract_profile, merge_long_term, render_turns, UserProfile};
use super::ToolCallRecord;
use crate::llm::{ChatProvider, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(rename = "role")]
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn { speaker: Speaker::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn { speaker: Speaker::Assistant, text: text.into() }
    }
}

pub const DEFAULT_CHAR_BUDGET: usize = 12_000;
pub const DEFAULT_KEEP_RECENT: usize = 10;

/// Recent dialogue turns plus the long-term profile that older turns were
/// folded into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueContext {
    pub turns: Vec<Turn>,
    pub long_term: UserProfile,
    pub char_budget: usize,
    pub keep_recent: usize,
}

impl Default for DialogueContext {
    fn default() -> Self {
        DialogueContext::new(DEFAULT_CHAR_BUDGET)
    }
}

impl DialogueContext {
    pub fn new(char_budget: usize) -> Self {
        DialogueContext {
            turns: Vec::new(),
            long_term: UserProfile::default(),
            char_budget,
            keep_recent: DEFAULT_KEEP_RECENT,
        }
    }

    pub fn push(&mut self, turn: Turn) {
        self.turns.push(turn);
    }

    /// History text as it appears in prompts.
    pub fn rendered_history(&self) -> String {
        render_turns(&self.turns)
    }

    fn rendered_len(turns: &[Turn]) -> usize {
        // lines joined by '\n'
        let chars: usize = turns.iter().map(|t| t.render().chars().count()).sum();
        chars + turns.len().saturating_sub(1)
    }

    /// Index of the first turn to keep so that the rendered history fits.
    fn fold_point(&self) -> usize {
        let n = self.turns.len();
        if Self::rendered_len(&self.turns) <= self.char_budget {
            return 0;
        }
        let mut fit = n;
        while fit > 0 && Self::rendered_len(&self.turns[fit - 1..]) <= self.char_budget {
            fit -= 1;
        }
        fit.max(n.saturating_sub(self.keep_recent))
    }

    /// Folds the oldest turns into the long-term profile when the rendered
    /// history exceeds the budget. Returns the number of provider calls.
    pub fn fold_if_needed(&mut self, profiler: &dyn ChatProvider, item: &str) -> Result<usize, ProviderError> {
        let split = self.fold_point();
        if split == 0 {
            return Ok(0);
        }
        let extraction = extract_profile(profiler, item, &self.turns[..split])?;
        self.long_term = merge_long_term(&self.long_term, &extraction.profile);
        self.turns.drain(..split);
        tracing::debug!(folded = split, kept = self.turns.len(), "folded dialogue into long-term profile");
        Ok(extraction.calls)
    }

    /// Appends a prior transcript and folds it as needed.
    pub fn load_transcript(
        &mut self,
        transcript: impl IntoIterator<Item = Turn>,
        profiler: &dyn ChatProvider,
        item: &str,
    ) -> Result<usize, ProviderError> {
        self.turns.extend(transcript);
        self.fold_if_needed(profiler, item)
    }
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    #[serde(flatten)]
    pub turn: Turn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_term: Option<UserProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_term: Option<UserProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tracker: Vec<ToolCallRecord>,
}

pub fn write_session_log_line(mut out: impl Write, entry: &SessionLogEntry) -> std::io::Result<()> {
    let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
    writeln!(out, "{line}")
}

pub fn read_session_log(input: impl BufRead) -> std::io::Result<Vec<SessionLogEntry>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("session log line {}: {e}", n + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::KeywordProfiler;

    #[test]
    fn fold_keeps_recent_turns_and_budget() {
        let mut ctx = DialogueContext::new(200);
        for i in 0..30 {
            ctx.push(Turn::user(format!("I like Game{i}")));
        }
        let calls = ctx.fold_if_needed(&KeywordProfiler, "game").unwrap();
        assert_eq!(calls, 1);
        assert!(ctx.rendered_history().chars().count() <= 200);
        assert!(ctx.turns.len() <= 10);
        assert!(ctx.long_term.like.iter().any(|x| x == "Game0"));
        assert_eq!(ctx.turns.last().unwrap().text, "I like Game29");
    }

    #[test]
    fn fold_is_noop_under_budget() {
        let mut ctx = DialogueContext::new(1000);
        ctx.push(Turn::user("hello"));
        assert_eq!(ctx.fold_if_needed(&KeywordProfiler, "game").unwrap(), 0);
        assert_eq!(ctx.turns.len(), 1);
    }

    #[test]
    fn fold_beyond_recent_window_when_needed() {
        let mut ctx = DialogueContext::new(40);
        for _ in 0..4 {
            ctx.push(Turn::user("x".repeat(30)));
        }
        ctx.fold_if_needed(&KeywordProfiler, "game").unwrap();
        assert_eq!(ctx.turns.len(), 1);
    }

    #[test]
    fn session_log_round_trip() {
        let entries = vec![
            SessionLogEntry { turn: Turn::user("hi"), short_term: None, long_term: None, tracker: vec![] },
            SessionLogEntry {
                turn: Turn::assistant("hello"),
                short_term: Some(UserProfile { like: vec!["A".into()], ..Default::default() }),
                long_term: Some(UserProfile::default()),
                tracker: vec![],
            },
        ];
        let mut buf = Vec::new();
        for e in &entries {
            write_session_log_line(&mut buf, e).unwrap();
        }
        assert!(String::from_utf8_lossy(&buf).starts_with("{\"role\":\"user\",\"text\":\"hi\"}"));
        assert_eq!(read_session_log(buf.as_slice()).unwrap(), entries);
    }
}
