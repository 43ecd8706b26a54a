//! One conversational turn: plan, execute, respond, and the critic loop.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::llm::{render_prompt, ChatMessage, ChatProvider, CompletionParams, ProviderError, TemplateId};
use crate::memory::{
    compose_profile, extract_profile, CandidateBus, DialogueContext, KeywordProfiler, SessionLogEntry,
    ToolCallRecord, Turn, UserProfile, DEFAULT_CHAR_BUDGET,
};
use crate::planner::{
    execute_plan, final_observation, validate_plan, DemoStore, Embedder, HashEmbedder, Plan, PlanInputs,
    PlanOutcome, PlanParseError, Planner,
};
use crate::recmodels::{ItemCfRanker, Ranker, SimilarityModel};
use crate::toolkit::{ToolContext, ToolLimits, ToolRegistry};

pub const TRACE_VERSION: u32 = 1;
pub const DEFAULT_MAX_RECHAINS: usize = 2;

const GIVE_UP_APOLOGY: &str = "Sorry, I am not sure this fully answers your request.";
const GIVE_UP_FALLBACK: &str =
    "Sorry, I could not work out a good answer. Could you tell me more about what you are looking for?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentSource {
    Critic,
    /// Local parse or validation failure; no critic call was made.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: Verdict,
    pub feedback: String,
    pub source: JudgmentSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl Judgment {
    pub fn is_positive(&self) -> bool {
        self.verdict == Verdict::Positive
    }

    fn synthetic(feedback: String) -> Self {
        Judgment { verdict: Verdict::Negative, feedback, source: JudgmentSource::Validation, warning: None }
    }
}

/// `Yes...` is positive, `No...` negative with the reply as feedback,
/// anything else positive with a warning.
pub fn parse_judgment(reply: &str) -> Judgment {
    let t = reply.trim();
    let starts = |p: &str| t.get(..p.len()).is_some_and(|h| h.eq_ignore_ascii_case(p));
    if starts("yes") {
        Judgment { verdict: Verdict::Positive, feedback: String::new(), source: JudgmentSource::Critic, warning: None }
    } else if starts("no") {
        Judgment { verdict: Verdict::Negative, feedback: t.to_string(), source: JudgmentSource::Critic, warning: None }
    } else {
        let warning = format!("critic reply is neither Yes nor No: {t:?}");
        tracing::warn!("{warning}");
        Judgment {
            verdict: Verdict::Positive,
            feedback: String::new(),
            source: JudgmentSource::Critic,
            warning: Some(warning),
        }
    }
}

/// Critic prompt inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticInputs<'a> {
    pub chat_history: &'a str,
    pub request: &'a str,
    pub track: &'a str,
    pub answer: &'a str,
}

/// One critic call.
pub fn reflect(
    provider: &dyn ChatProvider,
    planner: &Planner,
    inputs: &CriticInputs<'_>,
) -> Result<Judgment, ProviderError> {
    let vars = planner.prompt.vars_with([
        ("chat_history", inputs.chat_history.to_string()),
        ("request", inputs.request.to_string()),
        ("plan", inputs.track.to_string()),
        ("answer", inputs.answer.to_string()),
    ]);
    let prompt = render_prompt(TemplateId::Critic, &vars).expect("critic variables are complete");
    let reply = provider.complete(&[ChatMessage::user(prompt)], &CompletionParams::default())?;
    Ok(parse_judgment(&reply))
}

/// One plan/execute/respond/judge round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub bus_size_at_start: usize,
    pub prompt_inputs: PlanInputs,
    pub instruction: String,
    pub plan_reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_error: Option<PlanParseError>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(default)]
    pub records: Vec<ToolCallRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub judgment: Judgment,
}

impl Attempt {
    /// Whether tools ran in this attempt.
    pub fn used_tools(&self) -> bool {
        self.plan.as_ref().is_some_and(|p| !p.is_empty()) && self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub trace_version: u32,
    pub turn_id: usize,
    pub user_text: String,
    pub response: String,
    pub attempts: Vec<Attempt>,
    pub actor_calls: usize,
    pub critic_calls: usize,
    /// Calls spent on profile extraction and memory folding.
    pub memory_calls: usize,
    pub gave_up: bool,
    pub short_term: UserProfile,
    pub long_term: UserProfile,
}

impl TurnResult {
    pub fn final_attempt(&self) -> &Attempt {
        self.attempts.last().expect("a turn has at least one attempt")
    }

    /// The executed plan of the final attempt, if tools were used.
    pub fn final_plan(&self) -> Option<&Plan> {
        let a = self.final_attempt();
        a.used_tools().then_some(a.plan.as_ref()).flatten()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TurnError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Domain noun used in every prompt.
    pub item: String,
    pub max_rechains: usize,
    pub char_budget: usize,
    pub demo_count: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            item: "game".into(),
            max_rechains: DEFAULT_MAX_RECHAINS,
            char_budget: DEFAULT_CHAR_BUDGET,
            demo_count: crate::planner::DEFAULT_DEMO_COUNT,
        }
    }
}

/// Shared, immutable agent state. Sessions hold the mutable parts.
#[derive(Clone)]
pub struct Agent {
    pub catalog: Arc<Catalog>,
    pub model: Arc<SimilarityModel>,
    pub ranker: Arc<dyn Ranker>,
    pub registry: Arc<ToolRegistry>,
    pub planner: Planner,
    pub actor: Arc<dyn ChatProvider>,
    pub critic: Arc<dyn ChatProvider>,
    pub profiler: Arc<dyn ChatProvider>,
    pub limits: ToolLimits,
    pub config: AgentConfig,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent").field("items", &self.catalog.len()).field("config", &self.config).finish()
    }
}

impl Agent {
    /// Agent with the ItemCF ranker, the hashed embedder and the keyword
    /// profiler. `provider` serves as both actor and critic.
    pub fn new(
        catalog: Arc<Catalog>,
        model: Arc<SimilarityModel>,
        demos: Arc<DemoStore>,
        provider: Arc<dyn ChatProvider>,
        config: AgentConfig,
    ) -> Self {
        Self::with_embedder(catalog, model, demos, Arc::new(HashEmbedder), provider, config)
    }

    pub fn with_embedder(
        catalog: Arc<Catalog>,
        model: Arc<SimilarityModel>,
        demos: Arc<DemoStore>,
        embedder: Arc<dyn Embedder>,
        provider: Arc<dyn ChatProvider>,
        config: AgentConfig,
    ) -> Self {
        let registry = Arc::new(ToolRegistry::standard());
        let mut planner = Planner::new(registry.prompt_context(&config.item, &catalog), demos, embedder);
        planner.demo_count = config.demo_count;
        Agent {
            ranker: Arc::new(ItemCfRanker::new(model.clone())),
            catalog,
            model,
            registry,
            planner,
            actor: provider.clone(),
            critic: provider,
            profiler: Arc::new(KeywordProfiler),
            limits: ToolLimits::default(),
            config,
        }
    }

    pub fn with_critic(mut self, critic: Arc<dyn ChatProvider>) -> Self {
        self.critic = critic;
        self
    }

    pub fn with_profiler(mut self, profiler: Arc<dyn ChatProvider>) -> Self {
        self.profiler = profiler;
        self
    }

    pub fn new_session(&self) -> Session {
        Session {
            context: DialogueContext::new(self.config.char_budget),
            short_term: UserProfile::default(),
            bus: CandidateBus::new(&self.catalog),
            turns: Vec::new(),
            log: Vec::new(),
        }
    }

    /// History text for prompts: the long-term profile, then recent turns.
    pub fn history_text(&self, context: &DialogueContext) -> String {
        let turns = context.rendered_history();
        if context.long_term.is_empty() {
            return turns;
        }
        let lt = &context.long_term;
        let profile = format!(
            "Long-term profile of the human. Likes: {}. Dislikes: {}.",
            if lt.like.is_empty() { "none".to_string() } else { lt.like.join(", ") },
            if lt.dislike.is_empty() { "none".to_string() } else { lt.dislike.join(", ") },
        );
        if turns.is_empty() {
            profile
        } else {
            format!("{profile}\n{turns}")
        }
    }

    /// Runs one user turn to completion.
    pub fn run_turn(&self, session: &mut Session, user_text: &str) -> Result<TurnResult, TurnError> {
        let mut memory_calls = 0;
        let mut segment = session.context.turns.clone();
        segment.push(Turn::user(user_text));
        let extraction = extract_profile(self.profiler.as_ref(), &self.config.item, &segment)?;
        memory_calls += extraction.calls;
        session.short_term = extraction.profile;
        let profile = compose_profile(&session.context.long_term, &session.short_term);

        let history = self.history_text(&session.context);
        let ctx = ToolContext {
            catalog: &self.catalog,
            model: &self.model,
            ranker: self.ranker.as_ref(),
            profile: &profile,
            limits: self.limits,
        };

        let mut attempts: Vec<Attempt> = Vec::new();
        let mut feedback: Vec<String> = Vec::new();
        let (mut actor_calls, mut critic_calls) = (0, 0);
        let mut accepted = false;
        for _ in 0..=self.config.max_rechains {
            session.bus.reset(&self.catalog);
            let bus_size_at_start = session.bus.len();
            let draft = self.planner.make_plan(self.actor.as_ref(), user_text, &history, &feedback)?;
            actor_calls += 1;
            let mut attempt = Attempt {
                bus_size_at_start,
                prompt_inputs: draft.inputs.clone(),
                instruction: draft.instruction,
                plan_reply: draft.reply,
                plan: None,
                plan_error: None,
                violations: Vec::new(),
                records: Vec::new(),
                observation: None,
                answer: None,
                judgment: Judgment::synthetic(String::new()),
            };
            let answer = match draft.outcome {
                PlanOutcome::Unparsed { error } => {
                    attempt.judgment = Judgment::synthetic(format!(
                        "No. The tool using plan could not be parsed ({}). Write the plan as a numbered list like \
                         \"1. <tool name> (<input>); 2. <tool name> (<input>)\" using only the listed tools.",
                        error.reason
                    ));
                    attempt.plan_error = Some(error);
                    None
                }
                PlanOutcome::Plan { plan } => {
                    let violations = validate_plan(&plan, &self.registry);
                    if violations.is_empty() {
                        let records = execute_plan(&plan, &mut session.bus, &self.registry, &ctx);
                        let observation = final_observation(&records);
                        let answer = self.planner.respond(self.actor.as_ref(), &draft.inputs, &plan, &observation)?;
                        actor_calls += 1;
                        attempt.records = records;
                        attempt.observation = Some(observation);
                        attempt.plan = Some(plan);
                        Some(answer)
                    } else {
                        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
                        attempt.judgment = Judgment::synthetic(format!(
                            "No. The tool using plan is not valid because {}. You should fix the plan.",
                            text.join("; ")
                        ));
                        attempt.violations = text;
                        attempt.plan = Some(plan);
                        None
                    }
                }
                PlanOutcome::Direct { answer: Some(a) } => {
                    attempt.plan = Some(Plan::default());
                    Some(a)
                }
                PlanOutcome::Direct { answer: None } => {
                    let empty = Plan::default();
                    let a = self.planner.respond(self.actor.as_ref(), &draft.inputs, &empty, "")?;
                    actor_calls += 1;
                    attempt.plan = Some(empty);
                    Some(a)
                }
            };
            if let Some(answer) = &answer {
                let track = session.bus.render_tracker();
                attempt.judgment = reflect(
                    self.critic.as_ref(),
                    &self.planner,
                    &CriticInputs { chat_history: &history, request: user_text, track: &track, answer },
                )?;
                critic_calls += 1;
            }
            attempt.answer = answer;
            let positive = attempt.judgment.is_positive();
            if !positive {
                feedback.push(attempt.judgment.feedback.clone());
            }
            attempts.push(attempt);
            if positive {
                accepted = true;
                break;
            }
        }

        let response = if accepted {
            attempts.last().and_then(|a| a.answer.clone()).unwrap_or_default()
        } else {
            tracing::info!(attempts = attempts.len(), "giving up after repeated negative judgments");
            match attempts.iter().rev().find_map(|a| a.answer.clone()) {
                Some(a) => format!("{a}\n{GIVE_UP_APOLOGY}"),
                None => GIVE_UP_FALLBACK.to_string(),
            }
        };

        session.context.push(Turn::user(user_text));
        session.context.push(Turn::assistant(response.clone()));
        memory_calls += session.context.fold_if_needed(self.profiler.as_ref(), &self.config.item)?;

        let result = TurnResult {
            trace_version: TRACE_VERSION,
            turn_id: session.turns.len(),
            user_text: user_text.to_string(),
            response,
            gave_up: !accepted,
            actor_calls,
            critic_calls,
            memory_calls,
            short_term: session.short_term.clone(),
            long_term: session.context.long_term.clone(),
            attempts,
        };
        session.log.push(SessionLogEntry { turn: Turn::user(user_text), short_term: None, long_term: None, tracker: vec![] });
        session.log.push(SessionLogEntry {
            turn: Turn::assistant(result.response.clone()),
            short_term: Some(result.short_term.clone()),
            long_term: Some(result.long_term.clone()),
            tracker: result.final_attempt().records.clone(),
        });
        session.turns.push(result.clone());
        Ok(result)
    }
}

/// Mutable per-conversation state.
#[derive(Debug, Clone)]
pub struct Session {
    pub context: DialogueContext,
    pub short_term: UserProfile,
    pub bus: CandidateBus,
    pub turns: Vec<TurnResult>,
    /// Session log lines, one per user or assistant message.
    pub log: Vec<SessionLogEntry>,
}

impl Session {
    pub fn turn(&self, turn_id: usize) -> Option<&TurnResult> {
        self.turns.get(turn_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::games_toy;
    use crate::llm::ScriptedProvider;

    fn agent(provider: Arc<ScriptedProvider>) -> Agent {
        let catalog = games_toy();
        let model = SimilarityModel::build(&catalog.split().train, catalog.len());
        Agent::new(
            Arc::new(catalog),
            Arc::new(model),
            Arc::new(DemoStore::seed(&HashEmbedder).unwrap()),
            provider,
            AgentConfig::default(),
        )
    }

    const PLAN: &str = "Action: Tool Executor\nAction Input: 1. SQL Retrieval Tool (tags LIKE '%RPG%'); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (3)";

    #[test]
    fn judgment_parsing() {
        assert!(parse_judgment(" yes, fine").is_positive());
        let j = parse_judgment("No. The response/tool using is not good because the SQL conditions exceed the user's request. You should relax them.");
        assert_eq!(j.verdict, Verdict::Negative);
        assert!(j.feedback.starts_with("No. The response/tool using is not good because"));
        let j = parse_judgment("Maybe");
        assert!(j.is_positive() && j.warning.is_some());
    }

    #[test]
    fn happy_path_counts() {
        let provider = Arc::new(ScriptedProvider::sequence([PLAN, "Final Answer: Try these.", "Yes"]));
        let a = agent(provider.clone());
        let mut s = a.new_session();
        let r = a.run_turn(&mut s, "Recommend some RPG games").unwrap();
        assert_eq!((r.actor_calls, r.critic_calls, r.attempts.len()), (2, 1, 1));
        assert_eq!(r.response, "Try these.");
        assert_eq!(provider.calls(), 3);
        assert_eq!(r.final_attempt().records.len(), 3);
        assert!(provider.prompts()[1].contains("Observation: 1. "));
        assert!(provider.prompts()[2].contains("The current user request is: Recommend some RPG games"));
    }

    #[test]
    fn unknown_tool_rechains_without_critic() {
        let provider = Arc::new(ScriptedProvider::sequence([
            "Action Input: 1. Web Search Tool (rpg); 2. Candidate Fetching Tool (3)",
            PLAN,
            "Final Answer: ok",
            "Yes",
        ]));
        let a = agent(provider.clone());
        let mut s = a.new_session();
        let r = a.run_turn(&mut s, "RPG please").unwrap();
        assert_eq!(r.attempts.len(), 2);
        assert_eq!(r.attempts[0].judgment.source, JudgmentSource::Validation);
        assert_eq!((r.actor_calls, r.critic_calls), (3, 1));
        assert!(r.attempts[1].instruction.contains("unknown tool"));
        assert!(r.attempts.iter().all(|a| a.bus_size_at_start == 20));
    }

    #[test]
    fn gives_up_with_apology() {
        let provider = Arc::new(ScriptedProvider::sequence([
            PLAN, "Final Answer: a1", "No. first", PLAN, "Final Answer: a2", "No. second", PLAN, "Final Answer: a3",
            "No. third",
        ]));
        let a = agent(provider);
        let mut s = a.new_session();
        let r = a.run_turn(&mut s, "RPG please").unwrap();
        assert!(r.gave_up);
        assert_eq!(r.attempts.len(), 3);
        assert_eq!(r.response, format!("a3\n{GIVE_UP_APOLOGY}"));
        assert!(r.attempts[2].instruction.contains("No. first") && r.attempts[2].instruction.contains("No. second"));
    }

    #[test]
    fn chit_chat_direct_answer() {
        let provider = Arc::new(ScriptedProvider::sequence(["Thought: No\nFinal Answer: Hello!", "Yes"]));
        let a = agent(provider);
        let mut s = a.new_session();
        let r = a.run_turn(&mut s, "hi").unwrap();
        assert_eq!(r.response, "Hello!");
        assert_eq!((r.actor_calls, r.critic_calls), (1, 1));
        assert!(r.final_plan().is_none());
        assert!(s.bus.tracker.is_empty());
        assert_eq!(s.context.turns.len(), 2);
    }

    #[test]
    fn provider_failure_is_an_error() {
        let a = agent(Arc::new(ScriptedProvider::sequence([PLAN])));
        let mut s = a.new_session();
        assert!(matches!(a.run_turn(&mut s, "x"), Err(TurnError::Provider(ProviderError::ScriptExhausted))));
    }

    #[test]
    fn trace_serializes() {
        let provider = Arc::new(ScriptedProvider::sequence([PLAN, "Final Answer: x", "Yes"]));
        let a = agent(provider);
        let mut s = a.new_session();
        let r = a.run_turn(&mut s, "RPG").unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: TurnResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(json.contains("\"trace_version\":1"));
    }
}
