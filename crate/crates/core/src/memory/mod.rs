//! Per-turn candidate bus and the long/short-term user profile.

mod context;
mod profile;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemId};
use crate::recmodels::RankSchema;

pub use context::{
    read_session_log, write_session_log_line, DialogueContext, SessionLogEntry, Speaker, Turn, DEFAULT_CHAR_BUDGET,
    DEFAULT_KEEP_RECENT,
};
pub use profile::{
    compose_profile, extract_profile, merge_long_term, render_turns, Extraction, KeywordProfiler, UserProfile,
};

pub const ITEMCF_TOOL: &str = "ItemCF Retrieval Tool";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorKind {
    /// Read-only guard or tool policy refused the input.
    Policy,
    SqlSyntax,
    InvalidInput,
    NoCandidates,
    UnknownTool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolError {
    pub kind: ToolErrorKind,
    pub message: String,
}

/// Structured observation of one tool call (`o_k`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolOutput {
    pub candidates_before: usize,
    pub remaining: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seed_ids: Vec<ItemId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<RankSchema>,
    /// Rendered lookup result.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    /// Titles handed to the responder.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolError>,
}

impl ToolOutput {
    pub fn failed(kind: ToolErrorKind, message: impl Into<String>) -> Self {
        ToolOutput { error: Some(ToolError { kind, message: message.into() }), ..Default::default() }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// One-line text used in critic prompts and tracker dumps.
    pub fn summary(&self) -> String {
        let mut parts = vec![format!("candidates {} -> {}", self.candidates_before, self.remaining)];
        if let Some(c) = &self.conditions {
            parts.push(format!("conditions: {c}"));
        }
        if !self.seeds.is_empty() {
            parts.push(format!("seeds: {}", self.seeds.join(", ")));
        }
        if let Some(s) = self.schema {
            parts.push(format!("schema: {s}"));
        }
        if let Some(r) = &self.result {
            parts.push(format!("result: {r}"));
        }
        if !self.items.is_empty() {
            parts.push(format!("items: {}", self.items.join(", ")));
        }
        for n in &self.notes {
            parts.push(n.clone());
        }
        if let Some(e) = &self.error {
            parts.push(format!("ERROR: {}", e.message));
        }
        parts.join("; ")
    }
}

/// Tracker entry `(f_k, i_k, o_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub tool_name: String,
    pub tool_input: String,
    pub output: ToolOutput,
}

impl ToolCallRecord {
    pub fn is_error(&self) -> bool {
        self.output.error.is_some()
    }
}

/// Candidate item list plus the append-only tool-call tracker.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateBus {
    pub candidates: Vec<ItemId>,
    pub tracker: Vec<ToolCallRecord>,
    /// Set once a ranking step has ordered the candidates.
    pub ranked: bool,
}

impl CandidateBus {
    /// Every catalog item in ascending id order, empty tracker.
    pub fn new(catalog: &Catalog) -> Self {
        CandidateBus { candidates: catalog.all_ids(), tracker: Vec::new(), ranked: false }
    }

    pub fn reset(&mut self, catalog: &Catalog) {
        *self = CandidateBus::new(catalog);
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn record_step(&mut self, record: ToolCallRecord) {
        self.tracker.push(record);
    }

    /// Seeds of the most recent successful ItemCF step.
    pub fn last_itemcf_seeds(&self) -> Option<&[ItemId]> {
        self.tracker
            .iter()
            .rev()
            .find(|r| r.tool_name == ITEMCF_TOOL && !r.is_error())
            .map(|r| r.output.seed_ids.as_slice())
    }

    /// Tracker as numbered lines for the critic's `{plan}` slot.
    pub fn render_tracker(&self) -> String {
        if self.tracker.is_empty() {
            return "no tools were used".to_string();
        }
        self.tracker
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{}. {} ({}) -> {}", i + 1, r.tool_name, r.tool_input, r.output.summary()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn reset_bus(catalog: &Catalog) -> CandidateBus {
    CandidateBus::new(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(name: &str, out: ToolOutput) -> ToolCallRecord {
        ToolCallRecord { tool_name: name.into(), tool_input: "in".into(), output: out }
    }

    #[test]
    fn tracker_keeps_error_text_and_seeds() {
        let mut bus = CandidateBus::default();
        bus.record_step(record("SQL Retrieval Tool", ToolOutput::failed(ToolErrorKind::SqlSyntax, "near \"FORM\": syntax error")));
        let cf = ToolOutput { seed_ids: vec![ItemId(3)], ..Default::default() };
        bus.record_step(record(ITEMCF_TOOL, cf));
        bus.record_step(record(ITEMCF_TOOL, ToolOutput::failed(ToolErrorKind::InvalidInput, "x")));
        assert_eq!(bus.tracker.len(), 3);
        assert!(bus.render_tracker().contains("ERROR: near \"FORM\": syntax error"));
        assert_eq!(bus.last_itemcf_seeds(), Some(&[ItemId(3)][..]));
    }

    fn arb_output() -> impl Strategy<Value = ToolOutput> {
        (
            0usize..100,
            0usize..100,
            prop::collection::vec("[a-z ]{0,8}", 0..3),
            prop::collection::vec(0u32..50, 0..3),
            prop::option::of("[a-z%' ]{0,12}"),
            prop::option::of(prop_oneof![
                Just(RankSchema::Popularity),
                Just(RankSchema::Similarity),
                Just(RankSchema::Preference)
            ]),
            prop::collection::vec("[A-Za-z ]{0,8}", 0..3),
            prop::option::of("[a-z ]{0,10}"),
        )
            .prop_map(|(b, r, seeds, ids, conditions, schema, items, err)| ToolOutput {
                candidates_before: b,
                remaining: r,
                seeds,
                seed_ids: ids.into_iter().map(ItemId).collect(),
                conditions,
                schema,
                result: None,
                items,
                notes: vec![],
                error: err.map(|m| ToolError { kind: ToolErrorKind::Policy, message: m }),
            })
    }

    proptest! {
        #[test]
        fn tracker_round_trips_through_json(outs in prop::collection::vec(arb_output(), 0..5)) {
            let bus = CandidateBus {
                candidates: vec![ItemId(1), ItemId(0)],
                tracker: outs.into_iter().map(|o| record("Ranking Tool", o)).collect(),
                ranked: true,
            };
            let json = serde_json::to_string(&bus).unwrap();
            let back: CandidateBus = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, bus);
        }
    }
}
