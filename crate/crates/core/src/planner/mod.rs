//! Plan grammar, validation, demonstration retrieval and plan execution.

mod demos;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::llm::{render_prompt, ChatProvider, CompletionParams, ChatMessage, PromptContext, ProviderError, TemplateId};
use crate::memory::{CandidateBus, ToolCallRecord};
use crate::toolkit::{ToolContext, ToolKind, ToolRegistry, CANDIDATES_STORING_TOOL, CANDIDATE_FETCHING_TOOL, RANKING_TOOL};

pub use demos::{
    cosine, hash_embed, DemoRecord, DemoStep, DemoStore, DemoStoreError, Demonstration, EmbedError, Embedder,
    HashEmbedder, HttpEmbedder, EMBED_DIM,
};

pub const MAX_PLAN_STEPS: usize = 8;
pub const DEFAULT_DEMO_COUNT: usize = 3;
/// Reply prefix by which the planner declares that no tool is needed.
pub const NO_TOOL_SENTINEL: &str = "NO_TOOL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tool_name: String,
    pub tool_input: String,
}

impl PlanStep {
    pub fn new(tool_name: impl Into<String>, tool_input: impl Into<String>) -> Self {
        PlanStep { tool_name: tool_name.into(), tool_input: tool_input.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        Plan { steps }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.tool_name.as_str()).collect()
    }

    /// `1. Tool (input); 2. Tool (input)`
    pub fn render(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {} ({})", i + 1, s.tool_name, s.tool_input))
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// `[{"tool": ..., "input": ...}]`
    pub fn render_structured(&self) -> String {
        let steps: Vec<StructuredStep> = self
            .steps
            .iter()
            .map(|s| StructuredStep { tool: s.tool_name.clone(), input: serde_json::Value::String(s.tool_input.clone()) })
            .collect();
        serde_json::to_string(&steps).expect("plan serializes")
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("could not parse plan ({reason}): {raw:?}")]
pub struct PlanParseError {
    pub raw: String,
    pub reason: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructuredStep {
    tool: String,
    #[serde(default)]
    input: serde_json::Value,
}

fn parse_structured(text: &str) -> Result<Plan, String> {
    let steps: Vec<StructuredStep> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if steps.is_empty() {
        return Err("plan has no steps".into());
    }
    Ok(Plan {
        steps: steps
            .into_iter()
            .map(|s| {
                let input = match s.input {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                };
                PlanStep { tool_name: s.tool.trim().to_string(), tool_input: input }
            })
            .collect(),
    })
}

/// Byte index just past the `)` matching the `(` at `open`.
fn matching_paren(s: &str, open: usize, quote_aware: bool) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s[open..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' && q == '"' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' if quote_aware => quote = Some(c),
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_numbered(text: &str, quote_aware: bool) -> Result<Plan, String> {
    let s = text;
    let mut pos = 0;
    let mut steps = Vec::new();
    let at = |p: usize| s[p..].chars().next();
    loop {
        while let Some(c) = at(pos) {
            if c.is_whitespace() || c == ';' {
                pos += c.len_utf8();
            } else {
                break;
            }
        }
        if pos >= s.len() {
            break;
        }
        let digits = s[pos..].chars().take_while(char::is_ascii_digit).count();
        if digits == 0 {
            return Err(format!("expected a step number at byte {pos}"));
        }
        pos += digits;
        if at(pos) != Some('.') {
            return Err(format!("expected '.' after step number at byte {pos}"));
        }
        pos += 1;
        let name_len = s[pos..].find(['(', ';', '\n']).unwrap_or(s.len() - pos);
        let name = s[pos..pos + name_len].trim();
        if name.is_empty() {
            return Err(format!("missing tool name at byte {pos}"));
        }
        pos += name_len;
        let mut input = "";
        if at(pos) == Some('(') {
            let end = matching_paren(s, pos, quote_aware).ok_or("unbalanced parentheses")?;
            input = &s[pos + 1..end - 1];
            pos = end;
            while let Some(c) = at(pos) {
                if c == ' ' || c == '\t' || c == '\r' {
                    pos += 1;
                } else {
                    break;
                }
            }
            if !matches!(at(pos), None | Some(';') | Some('\n')) {
                return Err(format!("unexpected text after step {} input", steps.len() + 1));
            }
        }
        steps.push(PlanStep::new(name, input));
    }
    if steps.is_empty() {
        return Err("plan has no steps".into());
    }
    Ok(Plan { steps })
}

/// Parses a structured array `[{"tool", "input"}]` or, failing that, a
/// numbered list `N. Tool Name (input)` separated by `;` or newlines.
pub fn parse_plan(text: &str) -> Result<Plan, PlanParseError> {
    let mut body = text.trim();
    if body.get(..5).is_some_and(|p| p.eq_ignore_ascii_case("plan:")) {
        body = body[5..].trim();
    }
    let err = |reason: String| PlanParseError { raw: text.to_string(), reason };
    let structured = if body.starts_with('[') { Some(parse_structured(body)) } else { None };
    match structured {
        Some(Ok(plan)) => Ok(plan),
        Some(Err(e)) => match parse_numbered(body, true) {
            Ok(plan) => Ok(plan),
            Err(_) => Err(err(format!("invalid structured plan: {e}"))),
        },
        None => parse_numbered(body, true).or_else(|first| parse_numbered(body, false).map_err(|_| err(first))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Violation {
    EmptyPlan,
    UnknownTool(String),
    MissingFinalFetch,
    StoringNotFirst,
    TooManySteps(usize),
    DuplicateRanking,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPlan => write!(f, "the plan has no steps"),
            Violation::UnknownTool(name) => write!(f, "unknown tool {name:?}"),
            Violation::MissingFinalFetch => write!(
                f,
                "{CANDIDATE_FETCHING_TOOL} must be the last step when retrieval or ranking tools are used"
            ),
            Violation::StoringNotFirst => write!(f, "{CANDIDATES_STORING_TOOL} may only be the first step"),
            Violation::TooManySteps(n) => write!(f, "the plan has {n} steps, at most {MAX_PLAN_STEPS} are allowed"),
            Violation::DuplicateRanking => write!(f, "{RANKING_TOOL} is used more than once"),
        }
    }
}

/// Structural checks run before execution. An empty result means valid.
pub fn validate_plan(plan: &Plan, registry: &ToolRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.is_empty() {
        out.push(Violation::EmptyPlan);
        return out;
    }
    let mut kinds = Vec::new();
    for step in &plan.steps {
        match registry.get(&step.tool_name) {
            Some(tool) => kinds.push(Some(tool.kind())),
            None => {
                out.push(Violation::UnknownTool(step.tool_name.clone()));
                kinds.push(None);
            }
        }
    }
    if kinds.iter().flatten().any(|k| k.needs_fetch()) && kinds.last() != Some(&Some(ToolKind::Fetching)) {
        out.push(Violation::MissingFinalFetch);
    }
    if kinds.iter().skip(1).any(|k| *k == Some(ToolKind::Storing)) {
        out.push(Violation::StoringNotFirst);
    }
    if plan.len() > MAX_PLAN_STEPS {
        out.push(Violation::TooManySteps(plan.len()));
    }
    if kinds.iter().filter(|k| **k == Some(ToolKind::Ranking)).count() > 1 {
        out.push(Violation::DuplicateRanking);
    }
    out
}

/// Runs the steps in order against the bus, stopping after the first
/// failing step. Returns the records appended by this call.
pub fn execute_plan(
    plan: &Plan,
    bus: &mut CandidateBus,
    registry: &ToolRegistry,
    ctx: &ToolContext<'_>,
) -> Vec<ToolCallRecord> {
    let start = bus.tracker.len();
    for step in &plan.steps {
        let record = registry.execute(&step.tool_name, &step.tool_input, bus, ctx);
        if record.is_error() {
            tracing::debug!(tool = %record.tool_name, "plan execution stopped at failing step");
            break;
        }
    }
    bus.tracker[start..].to_vec()
}

/// The observation handed to the responder: the last record's output.
pub fn final_observation(records: &[ToolCallRecord]) -> String {
    let Some(last) = records.last() else {
        return String::new();
    };
    let out = &last.output;
    if let Some(e) = &out.error {
        format!("{} failed: {}", last.tool_name, e.message)
    } else if !out.items.is_empty() {
        out.items.iter().enumerate().map(|(i, t)| format!("{}. {t}", i + 1)).collect::<Vec<_>>().join("\n")
    } else if let Some(r) = &out.result {
        r.clone()
    } else {
        out.summary()
    }
}

/// Text placed in the `{reflection}` slot after negative judgments.
pub fn render_reflection(feedback: &[String]) -> String {
    if feedback.is_empty() {
        return String::new();
    }
    let lines: Vec<String> = feedback.iter().enumerate().map(|(i, f)| format!("{}. {}", i + 1, f.trim())).collect();
    format!(
        "Your previous answers to this request were judged as not good. Make a new plan that avoids these problems:\n{}",
        lines.join("\n")
    )
}

/// Per-turn values of the actor prompt. Together with the agent's prompt
/// context they reproduce the instruction exactly.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanInputs {
    pub input: String,
    pub history: String,
    pub examples: String,
    pub reflection: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanOutcome {
    Plan { plan: Plan },
    /// No tools needed; `answer` is present when the reply already holds it.
    Direct { answer: Option<String> },
    Unparsed { error: PlanParseError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDraft {
    pub inputs: PlanInputs,
    pub instruction: String,
    pub reply: String,
    pub outcome: PlanOutcome,
}

fn after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.find(marker).map(|i| &text[i + marker.len()..])
}

/// Interprets the actor's planning reply.
pub fn interpret_plan_reply(reply: &str) -> PlanOutcome {
    let trimmed = reply.trim();
    if let Some(rest) = after(trimmed, "Action Input:") {
        let body = rest.find("Observation:").map_or(rest, |i| &rest[..i]);
        return match parse_plan(body) {
            Ok(plan) => PlanOutcome::Plan { plan },
            Err(error) => PlanOutcome::Unparsed { error },
        };
    }
    if let Some(rest) = after(trimmed, "Final Answer:") {
        return PlanOutcome::Direct { answer: Some(rest.trim().to_string()) };
    }
    if let Some(rest) = trimmed.strip_prefix(NO_TOOL_SENTINEL) {
        let answer = rest.trim_start_matches(':').trim();
        return PlanOutcome::Direct { answer: (!answer.is_empty()).then(|| answer.to_string()) };
    }
    match parse_plan(trimmed) {
        Ok(plan) => PlanOutcome::Plan { plan },
        Err(error) => PlanOutcome::Unparsed { error },
    }
}

/// Builds actor prompts from the prompt context and the demonstration store.
#[derive(Clone)]
pub struct Planner {
    pub prompt: PromptContext,
    pub demos: Arc<DemoStore>,
    pub embedder: Arc<dyn Embedder>,
    pub demo_count: usize,
}

impl fmt::Debug for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Planner").field("demos", &self.demos.len()).field("demo_count", &self.demo_count).finish()
    }
}

impl Planner {
    pub fn new(prompt: PromptContext, demos: Arc<DemoStore>, embedder: Arc<dyn Embedder>) -> Self {
        Planner { prompt, demos, embedder, demo_count: DEFAULT_DEMO_COUNT }
    }

    /// Retrieved demonstrations rendered for the `{examples}` slot.
    pub fn examples_for(&self, input: &str) -> Result<String, EmbedError> {
        let demos = self.demos.retrieve(input, self.demo_count, self.embedder.as_ref())?;
        Ok(demos.iter().map(|d| d.render()).collect::<Vec<_>>().join("\n\n"))
    }

    pub fn inputs(&self, input: &str, history: &str, feedback: &[String]) -> Result<PlanInputs, EmbedError> {
        Ok(PlanInputs {
            input: input.to_string(),
            history: history.to_string(),
            examples: self.examples_for(input)?,
            reflection: render_reflection(feedback),
        })
    }

    fn render_actor(&self, inputs: &PlanInputs, scratchpad: String) -> String {
        let vars = self.prompt.vars_with([
            ("input", inputs.input.clone()),
            ("history", inputs.history.clone()),
            ("examples", inputs.examples.clone()),
            ("reflection", inputs.reflection.clone()),
            ("agent_scratchpad", scratchpad),
        ]);
        render_prompt(TemplateId::TaskDescription, &vars).expect("task description variables are complete")
    }

    /// The planning instruction for `inputs`.
    pub fn render_instruction(&self, inputs: &PlanInputs) -> String {
        self.render_actor(inputs, String::new())
    }

    /// The response instruction: the planning instruction with the plan and
    /// its observation filled into the scratchpad.
    pub fn render_response_instruction(&self, inputs: &PlanInputs, plan: &Plan, observation: &str) -> String {
        let exe = crate::llm::templates::TOOL_EXECUTOR_NAME;
        let scratchpad = if plan.is_empty() {
            "Question: Do I need to use tools?\nThought: No, I know the final answer.\nFinal Answer:".to_string()
        } else {
            format!(
                "Question: Do I need to use tools?\nThought: Yes, I need to make tool using plans first and then use {exe} to execute.\n\
                 Action: {exe}\nAction Input: {}\nObservation: {observation}\n\nQuestion: Do I need to use tools?\nThought:",
                plan.render()
            )
        };
        self.render_actor(inputs, scratchpad)
    }

    /// One planning call.
    pub fn make_plan(
        &self,
        provider: &dyn ChatProvider,
        input: &str,
        history: &str,
        feedback: &[String],
    ) -> Result<PlanDraft, ProviderError> {
        let inputs = self.inputs(input, history, feedback).map_err(|e| ProviderError::Other(e.to_string()))?;
        let instruction = self.render_instruction(&inputs);
        let reply = provider.complete(&[ChatMessage::user(instruction.clone())], &CompletionParams::default())?;
        let outcome = interpret_plan_reply(&reply);
        Ok(PlanDraft { inputs, instruction, reply, outcome })
    }

    /// One response call; returns the answer text.
    pub fn respond(
        &self,
        provider: &dyn ChatProvider,
        inputs: &PlanInputs,
        plan: &Plan,
        observation: &str,
    ) -> Result<String, ProviderError> {
        let prompt = self.render_response_instruction(inputs, plan, observation);
        let reply = provider.complete(&[ChatMessage::user(prompt)], &CompletionParams::default())?;
        Ok(extract_final_answer(&reply))
    }
}

/// Text after the last `Final Answer:`, or the whole reply.
pub fn extract_final_answer(reply: &str) -> String {
    match reply.rfind("Final Answer:") {
        Some(i) => reply[i + "Final Answer:".len()..].trim().to_string(),
        None => reply.trim().to_string(),
    }
}
