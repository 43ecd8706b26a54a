//! Offline demonstration generation and fine-tuning dataset export.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::llm::{render_prompt, ChatMessage, ChatProvider, CompletionParams, ProviderError, TemplateId};
use crate::memory::{render_turns, Speaker, Turn};
use crate::planner::{parse_plan, validate_plan, DemoRecord, DemoStep, DemoStore, Plan, PlanInputs, Planner, Violation};
use crate::toolkit::ToolRegistry;
use crate::turn::TurnResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    InputFirst,
    OutputFirst,
    AgentTrace,
    SyntheticDialogue,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "input-first" => Ok(Strategy::InputFirst),
            "output-first" => Ok(Strategy::OutputFirst),
            "agent-trace" => Ok(Strategy::AgentTrace),
            "synthetic-dialogue" => Ok(Strategy::SyntheticDialogue),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenRecord {
    pub strategy: Strategy,
    pub intent: String,
    pub plan: Plan,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
    /// Plan produced from the generated intent (output-first only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replanned: Option<Plan>,
    /// Turns before the final user message (synthetic dialogues only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<Turn>,
}

impl GenRecord {
    fn new(strategy: Strategy, intent: String, plan: Plan) -> Self {
        GenRecord { strategy, intent, plan, accepted: true, reject_reason: None, replanned: None, context: Vec::new() }
    }

    fn reject(mut self, reason: impl Into<String>) -> Self {
        self.accepted = false;
        self.reject_reason = Some(reason.into());
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DemogenError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("seed list is empty")]
    EmptySeeds,
    #[error("target plan is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidTarget(Vec<Violation>),
}

/// Ordered tool-name sequences are equal; inputs are ignored.
pub fn plans_consistent(a: &Plan, b: &Plan) -> bool {
    a.len() == b.len() && a.steps.iter().zip(&b.steps).all(|(x, y)| x.tool_name.trim().eq_ignore_ascii_case(y.tool_name.trim()))
}

/// Request sentences from a numbered or bulleted reply.
pub fn parse_intent_list(reply: &str) -> Vec<String> {
    reply
        .lines()
        .filter_map(|line| {
            let mut t = line.trim();
            if let Some(rest) = t.strip_prefix("Request") {
                if let Some(i) = rest.find(':') {
                    if rest[..i].trim().chars().all(|c| c.is_ascii_digit()) {
                        t = rest[i + 1..].trim();
                    }
                }
            }
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            if digits > 0 && matches!(t[digits..].chars().next(), Some('.') | Some(')')) {
                t = t[digits + 1..].trim();
            }
            t = t.trim_start_matches(['-', '*']).trim();
            let t = t.trim_matches('"').trim();
            (!t.is_empty()).then(|| t.to_string())
        })
        .collect()
}

/// First catalog title contained in `intent`, case-insensitively.
pub fn placeholder_violation<'a>(intent: &str, catalog: &'a Catalog) -> Option<&'a str> {
    let lower = intent.to_lowercase();
    catalog.items().iter().map(|i| i.title.as_str()).find(|t| lower.contains(&t.to_lowercase()))
}

/// Demonstration generator over one provider.
pub struct DemoGenerator<'a> {
    pub provider: &'a dyn ChatProvider,
    pub planner: &'a Planner,
    pub registry: &'a ToolRegistry,
    pub catalog: &'a Catalog,
    /// Concurrent plan requests; 1 runs them in order on the caller.
    pub parallelism: usize,
}

impl<'a> DemoGenerator<'a> {
    fn call(&self, prompt: String) -> Result<String, ProviderError> {
        self.provider.complete(&[ChatMessage::user(prompt)], &CompletionParams::default())
    }

    fn map_ordered<T, R>(&self, items: Vec<T>, f: impl Fn(T) -> R + Send + Sync) -> Vec<R>
    where
        T: Send,
        R: Send,
    {
        if self.parallelism <= 1 {
            return items.into_iter().map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.parallelism).build() {
            Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
            Err(e) => {
                tracing::warn!(error = %e, "could not build thread pool; generating sequentially");
                items.into_iter().map(f).collect()
            }
        }
    }

    /// The plan-generation prompt for one request.
    pub fn plan_prompt(&self, request: &str) -> String {
        let examples = self.planner.examples_for(request).unwrap_or_default();
        let vars = self.planner.prompt.vars_with([("examples", examples), ("request", request.to_string())]);
        render_prompt(TemplateId::PlanGeneration, &vars).expect("plan generation variables are complete")
    }

    /// One plan call for `request`; the plan is parsed and validated.
    pub fn plan_for(&self, request: &str) -> Result<Result<Plan, String>, ProviderError> {
        let reply = self.call(self.plan_prompt(request))?;
        let plan = match parse_plan(&reply) {
            Ok(p) => p,
            Err(e) => return Ok(Err(format!("unparseable plan: {}", e.reason))),
        };
        let violations = validate_plan(&plan, self.registry);
        if violations.is_empty() {
            Ok(Ok(plan))
        } else {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Ok(Err(format!("invalid plan: {}", text.join("; "))))
        }
    }

    /// New intents emulating `seeds`, then one plan per intent.
    pub fn generate_input_first(&self, seeds: &[DemoRecord], n: usize) -> Result<Vec<GenRecord>, DemogenError> {
        if seeds.is_empty() {
            return Err(DemogenError::EmptySeeds);
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let requests = seeds.iter().map(|s| s.intent.as_str()).collect::<Vec<_>>().join("\n");
        let vars = self.planner.prompt.vars_with([("requests", requests), ("number", n.to_string())]);
        let prompt = render_prompt(TemplateId::IntentInputFirst, &vars).expect("input-first variables are complete");
        let mut intents = parse_intent_list(&self.call(prompt)?);
        intents.truncate(n);
        self.map_ordered(intents, |intent| {
            if let Some(title) = placeholder_violation(&intent, self.catalog) {
                let rec = GenRecord::new(Strategy::InputFirst, intent, Plan::default());
                return Ok(rec.reject(format!("placeholder violation: mentions {title:?}")));
            }
            let rec = GenRecord::new(Strategy::InputFirst, intent.clone(), Plan::default());
            Ok(match self.plan_for(&intent)? {
                Ok(plan) => GenRecord { plan, ..rec },
                Err(reason) => rec.reject(reason),
            })
        })
        .into_iter()
        .collect()
    }

    /// Intents for `target`, each re-planned and kept only when the
    /// re-plan uses the same tool sequence.
    pub fn generate_output_first(&self, target: &Plan, n: usize) -> Result<Vec<GenRecord>, DemogenError> {
        let violations = validate_plan(target, self.registry);
        if !violations.is_empty() {
            return Err(DemogenError::InvalidTarget(violations));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let plan_text = target.render();
        let examples = self.planner.examples_for(&plan_text).unwrap_or_default();
        let vars = self.planner.prompt.vars_with([
            ("examples", examples),
            ("number", n.to_string()),
            ("plan", plan_text),
        ]);
        let prompt = render_prompt(TemplateId::IntentOutputFirst, &vars).expect("output-first variables are complete");
        let mut intents = parse_intent_list(&self.call(prompt)?);
        intents.truncate(n);
        self.map_ordered(intents, |intent| {
            let rec = GenRecord::new(Strategy::OutputFirst, intent.clone(), target.clone());
            let reply = self.call(self.plan_prompt(&intent))?;
            Ok(match parse_plan(&reply) {
                Ok(replanned) => {
                    let consistent = plans_consistent(target, &replanned);
                    let rec = GenRecord { replanned: Some(replanned), ..rec };
                    if consistent {
                        rec
                    } else {
                        rec.reject("inconsistent")
                    }
                }
                Err(e) => rec.reject(format!("unparseable plan: {}", e.reason)),
            })
        })
        .into_iter()
        .collect()
    }

    /// New dialogues written from three sampled seed dialogues each.
    pub fn generate_synthetic(
        &self,
        seeds: &[SyntheticDialogue],
        n: usize,
        seed: u64,
    ) -> Result<Vec<GenRecord>, DemogenError> {
        if seeds.is_empty() {
            return Err(DemogenError::EmptySeeds);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prompts: Vec<String> = (0..n)
            .map(|_| {
                let picked: Vec<&SyntheticDialogue> = seeds.choose_multiple(&mut rng, 3.min(seeds.len())).collect();
                let dialogues = picked.iter().map(|d| d.render()).collect::<Vec<_>>().join("\n\n");
                let vars = self.planner.prompt.vars_with([("dialogues", dialogues)]);
                render_prompt(TemplateId::SyntheticDialogue, &vars).expect("synthetic dialogue variables are complete")
            })
            .collect();
        self.map_ordered(prompts, |prompt| {
            let reply = self.call(prompt)?;
            Ok(match SyntheticDialogue::parse(&reply) {
                Ok(d) => {
                    let plan = d.to_plan();
                    let violations = validate_plan(&plan, self.registry);
                    let (context, last) = d.split_last();
                    let rec = GenRecord { context, ..GenRecord::new(Strategy::SyntheticDialogue, last, plan) };
                    if violations.is_empty() {
                        rec
                    } else {
                        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
                        rec.reject(format!("invalid plan: {}", text.join("; ")))
                    }
                }
                Err(e) => GenRecord::new(Strategy::SyntheticDialogue, String::new(), Plan::default()).reject(e),
            })
        })
        .into_iter()
        .collect()
    }
}

/// Accepted records appended to a demonstration store.
pub fn extend_store(
    store: &mut DemoStore,
    records: &[GenRecord],
    embedder: &dyn crate::planner::Embedder,
) -> Result<usize, crate::planner::EmbedError> {
    let mut added = 0;
    for r in records.iter().filter(|r| r.accepted && !r.plan.is_empty()) {
        store.push(&r.intent, r.plan.clone(), embedder)?;
        added += 1;
    }
    Ok(added)
}

pub fn write_records(mut out: impl Write, records: &[GenRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

/// A dialogue ending in a user message, with the plan for that message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticDialogue {
    pub turns: Vec<Turn>,
    pub plan: Vec<DemoStep>,
}

const SEED_DIALOGUES: &str = include_str!("../data/synthetic_dialogues.jsonl");

impl SyntheticDialogue {
    /// The 30 bundled seed dialogues.
    pub fn seeds() -> Vec<SyntheticDialogue> {
        Self::read_jsonl(SEED_DIALOGUES.as_bytes()).expect("bundled dialogues parse")
    }

    pub fn read_jsonl(input: impl BufRead) -> std::io::Result<Vec<SyntheticDialogue>> {
        let mut out = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("dialogue line {}: {e}", n + 1))
            })?);
        }
        Ok(out)
    }

    pub fn to_plan(&self) -> Plan {
        DemoRecord { intent: String::new(), plan: self.plan.clone() }.to_plan()
    }

    /// Earlier turns and the final user message.
    pub fn split_last(&self) -> (Vec<Turn>, String) {
        match self.turns.split_last() {
            Some((last, rest)) => (rest.to_vec(), last.text.clone()),
            None => (Vec::new(), String::new()),
        }
    }

    /// `Human:`/`Assistant:` lines followed by `Plan: ...`.
    pub fn render(&self) -> String {
        format!("{}\nPlan: {}", render_turns(&self.turns), self.to_plan().render())
    }

    /// Inverse of [`SyntheticDialogue::render`].
    pub fn parse(text: &str) -> Result<SyntheticDialogue, String> {
        let plan_at = text.find("Plan:").ok_or("reply has no Plan: line")?;
        let mut turns: Vec<Turn> = Vec::new();
        for line in text[..plan_at].lines() {
            let line = line.trim();
            if let Some(t) = line.strip_prefix("Human:") {
                turns.push(Turn::user(t.trim()));
            } else if let Some(t) = line.strip_prefix("Assistant:") {
                turns.push(Turn::assistant(t.trim()));
            } else if let (Some(last), false) = (turns.last_mut(), line.is_empty()) {
                last.text.push(' ');
                last.text.push_str(line);
            }
        }
        if turns.last().map(|t| t.speaker) != Some(Speaker::User) {
            return Err("dialogue must end with a human message".into());
        }
        let plan = parse_plan(&text[plan_at..]).map_err(|e| format!("unparseable plan: {}", e.reason))?;
        Ok(SyntheticDialogue { turns, plan: DemoRecord::from_plan("", &plan).plan })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    AgentTrace,
    SyntheticDialogue,
}

/// One fine-tuning sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPlanPair {
    pub instruction: String,
    pub output: String,
    #[serde(skip)]
    pub source: Option<PairSource>,
    /// Prompt values the instruction was rendered from.
    #[serde(skip)]
    pub inputs: PlanInputs,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportReport {
    pub pairs: Vec<InstructionPlanPair>,
    pub from_traces: usize,
    pub from_synthetic: usize,
    /// Turns without an executed plan.
    pub skipped: usize,
}

impl ExportReport {
    /// Writes `{instruction, output}` lines.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for p in &self.pairs {
            writeln!(out, "{}", serde_json::to_string(p).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }
}

/// One pair per tool-using turn plus one per synthetic dialogue.
pub fn export_instruction_pairs(
    traces: &[TurnResult],
    synthetic: &[SyntheticDialogue],
    planner: &Planner,
) -> Result<ExportReport, crate::planner::EmbedError> {
    let mut report = ExportReport::default();
    for t in traces {
        match t.final_plan() {
            Some(plan) => {
                let attempt = t.final_attempt();
                report.pairs.push(InstructionPlanPair {
                    instruction: attempt.instruction.clone(),
                    output: plan.render(),
                    source: Some(PairSource::AgentTrace),
                    inputs: attempt.prompt_inputs.clone(),
                });
                report.from_traces += 1;
            }
            None => report.skipped += 1,
        }
    }
    for d in synthetic {
        let (context, last) = d.split_last();
        let plan = d.to_plan();
        if plan.is_empty() {
            report.skipped += 1;
            continue;
        }
        let inputs = planner.inputs(&last, &render_turns(&context), &[])?;
        report.pairs.push(InstructionPlanPair {
            instruction: planner.render_instruction(&inputs),
            output: plan.render(),
            source: Some(PairSource::SyntheticDialogue),
            inputs,
        });
        report.from_synthetic += 1;
    }
    Ok(report)
}
