//! User-simulator and one-turn evaluation, metrics and baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemId};
use crate::llm::{render_prompt, ChatMessage, ChatProvider, CompletionParams, ProviderError, TemplateId, Vars};
use crate::memory::{render_turns, Speaker, Turn};
use crate::turn::Agent;

pub const END_TOKEN: &str = "<END>";
pub const LONG_CHAT_MAX_TURNS: usize = 50;
pub const LONG_CHAT_PERIOD: usize = 5;

const CASUAL_ROUND_NOTE: &str = "In this round, chat casually about something other than recommendations and do not \
give any new information about the target.";
const INFO_ROUND_NOTE: &str = "In this round, respond to the recommender and give information about the target.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    SessionWise,
    LongChat,
    LongContext,
}

impl Setting {
    pub fn default_max_turns(self) -> usize {
        match self {
            Setting::LongChat => LONG_CHAT_MAX_TURNS,
            _ => 5,
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "session" | "session-wise" => Ok(Setting::SessionWise),
            "long-chat" => Ok(Setting::LongChat),
            "long-context" => Ok(Setting::LongContext),
            other => Err(format!("unknown setting {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Retrieval,
    Ranking,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrieval" => Ok(Task::Retrieval),
            "ranking" => Ok(Task::Ranking),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Random,
    Popularity,
}

impl std::str::FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(BaselineMode::Random),
            "popularity" => Ok(BaselineMode::Popularity),
            other => Err(format!("unknown baseline {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no sessions to aggregate")]
    Empty,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{0}")]
    Invalid(String),
}

/// A held-out item and the user's earlier items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTarget {
    pub user_id: i64,
    pub target: ItemId,
    pub history: Vec<ItemId>,
}

/// One target per user with a test interaction, in user id order.
pub fn eval_targets(catalog: &Catalog) -> Vec<EvalTarget> {
    let split = catalog.split();
    let mut history: BTreeMap<i64, Vec<(i64, ItemId)>> = BTreeMap::new();
    for it in split.train.iter().chain(&split.valid) {
        history.entry(it.user_id).or_default().push((it.timestamp, it.item_id));
    }
    split
        .test
        .iter()
        .map(|t| {
            let mut h = history.remove(&t.user_id).unwrap_or_default();
            h.sort();
            EvalTarget { user_id: t.user_id, target: t.item_id, history: h.into_iter().map(|(_, id)| id).collect() }
        })
        .collect()
}

/// Attribute text the simulator may reveal about an item.
pub fn item_info(catalog: &Catalog, id: ItemId) -> String {
    let Some(item) = catalog.item(id) else { return String::new() };
    format!(
        "tags: {}; price: {:.2}; release date: {}; description: {}",
        item.tags.join(", "),
        item.price,
        item.release_date,
        item.description
    )
}

fn titles(catalog: &Catalog, ids: &[ItemId]) -> String {
    ids.iter().map(|&id| catalog.title(id)).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSession {
    pub user_id: i64,
    pub target_item: ItemId,
    pub target_title: String,
    pub history: Vec<ItemId>,
    pub setting: Setting,
    pub transcript: Vec<Turn>,
    pub hit: bool,
    pub turns_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Multi-day chat built from the user's history, loaded into the agent's
/// memory before a long-context session.
pub fn synthesize_history_transcript(catalog: &Catalog, history: &[ItemId]) -> Vec<Turn> {
    let mut turns = Vec::new();
    for (day, &id) in history.iter().enumerate() {
        let title = catalog.title(id);
        let tags = catalog.item(id).map(|i| i.tags.join(", ")).unwrap_or_default();
        turns.push(Turn::user(format!("Day {}: I like {title}.", day + 1)));
        turns.push(Turn::assistant(format!(
            "Good to hear! {title} is tagged {tags}. Tell me whenever you want something new to play."
        )));
        turns.push(Turn::user("Thanks, that is all for today, see you tomorrow!".to_string()));
        turns.push(Turn::assistant("See you tomorrow!".to_string()));
    }
    turns
}

/// Simulator prompt for the next user message.
pub fn simulator_prompt(
    catalog: &Catalog,
    item: &str,
    target: &EvalTarget,
    transcript: &[Turn],
    round_note: Option<&str>,
) -> String {
    let mut vars = Vars::new();
    vars.insert("item".into(), item.to_string());
    vars.insert("history".into(), titles(catalog, &target.history));
    vars.insert("target".into(), catalog.title(target.target).to_string());
    vars.insert("target_item_info".into(), item_info(catalog, target.target));
    vars.insert("chat_history".into(), render_turns(transcript));
    let mut prompt = render_prompt(TemplateId::UserSimulator, &vars).expect("simulator variables are complete");
    if let Some(note) = round_note {
        prompt.push('\n');
        prompt.push_str(note);
    }
    prompt
}

/// Case-insensitive substring test for the target title.
pub fn mentions(text: &str, title: &str) -> bool {
    !title.is_empty() && text.to_lowercase().contains(&title.to_lowercase())
}

/// One simulated conversation. Provider failures end the session and are
/// recorded in `error`.
pub fn simulate_session(
    agent: &Agent,
    simulator: &dyn ChatProvider,
    target: &EvalTarget,
    max_turns: usize,
    setting: Setting,
) -> SimSession {
    let catalog = &agent.catalog;
    let target_title = catalog.title(target.target).to_string();
    let mut out = SimSession {
        user_id: target.user_id,
        target_item: target.target,
        target_title: target_title.clone(),
        history: target.history.clone(),
        setting,
        transcript: Vec::new(),
        hit: false,
        turns_used: 0,
        error: None,
    };
    let mut session = agent.new_session();
    if setting == Setting::LongContext {
        let transcript = synthesize_history_transcript(catalog, &target.history);
        if let Err(e) = session.context.load_transcript(transcript, agent.profiler.as_ref(), &agent.config.item) {
            out.error = Some(e.to_string());
            return out;
        }
    }
    for round in 0..max_turns {
        let casual = (round / LONG_CHAT_PERIOD) % 2 == 1;
        let note = (setting == Setting::LongChat).then_some(if casual { CASUAL_ROUND_NOTE } else { INFO_ROUND_NOTE });
        let prompt = simulator_prompt(catalog, &agent.config.item, target, &out.transcript, note);
        let reply = match simulator.complete(&[ChatMessage::user(prompt)], &CompletionParams::default()) {
            Ok(r) => r,
            Err(e) => {
                out.error = Some(e.to_string());
                break;
            }
        };
        if reply.contains(END_TOKEN) {
            break;
        }
        let user_text = reply.trim().to_string();
        out.transcript.push(Turn::user(user_text.clone()));
        let result = match agent.run_turn(&mut session, &user_text) {
            Ok(r) => r,
            Err(e) => {
                out.error = Some(e.to_string());
                break;
            }
        };
        out.turns_used = round + 1;
        out.transcript.push(Turn::assistant(result.response.clone()));
        if mentions(&result.response, &target_title) {
            out.hit = true;
            break;
        }
    }
    out
}

/// Runs sessions for `targets`, up to `parallelism` at a time, in input order.
pub fn run_simulator(
    agent: &Agent,
    simulator: &dyn ChatProvider,
    targets: &[EvalTarget],
    max_turns: usize,
    setting: Setting,
    parallelism: usize,
) -> Vec<SimSession> {
    let run = |t: &EvalTarget| simulate_session(agent, simulator, t, max_turns, setting);
    if parallelism <= 1 {
        return targets.iter().map(run).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| targets.par_iter().map(run).collect()),
        Err(_) => targets.iter().map(run).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub hit_at_k: f64,
    pub at_k: f64,
    pub sessions: usize,
}

/// Hit@k and AT@k; sessions without a hit within `k` turns count as `k + 1`.
pub fn session_metrics(sessions: &[SimSession], k: usize) -> Result<SessionMetrics, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = sessions.len() as f64;
    let hit = |s: &SimSession| s.hit && s.turns_used <= k;
    let hits = sessions.iter().filter(|s| hit(s)).count() as f64;
    let turns: f64 = sessions.iter().map(|s| if hit(s) { s.turns_used as f64 } else { (k + 1) as f64 }).sum();
    Ok(SessionMetrics { hit_at_k: hits / n, at_k: turns / n, sessions: sessions.len() })
}

/// Generated one-turn evaluation conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneTurnCase {
    pub task: Task,
    pub user_id: i64,
    pub target: ItemId,
    pub target_title: String,
    /// Shuffled candidates for ranking, empty for retrieval.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<ItemId>,
    pub conversation: Vec<Turn>,
}

pub const RANKING_NEGATIVES: usize = 19;

/// `count` distinct items outside `exclude`, uniformly.
fn sample_negatives(catalog: &Catalog, exclude: &[ItemId], count: usize, rng: &mut ChaCha8Rng) -> Vec<ItemId> {
    let pool: Vec<ItemId> = catalog.all_ids().into_iter().filter(|id| !exclude.contains(id)).collect();
    pool.choose_multiple(rng, count.min(pool.len())).copied().collect()
}

#[derive(Deserialize)]
struct GenMessage {
    role: String,
    text: String,
}

fn parse_generated_conversation(reply: &str) -> Vec<Turn> {
    let parsed = reply
        .find('[')
        .zip(reply.rfind(']'))
        .and_then(|(a, b)| serde_json::from_str::<Vec<GenMessage>>(&reply[a..=b]).ok());
    match parsed {
        Some(msgs) => msgs
            .into_iter()
            .map(|m| if m.role.eq_ignore_ascii_case("user") { Turn::user(m.text) } else { Turn::assistant(m.text) })
            .collect(),
        None => vec![Turn::user(reply.trim().to_string())],
    }
}

/// Builds a one-turn case: a generated conversation whose final user
/// message asks for `k` recommendations, or asks to rank 20 candidates.
pub fn gen_one_turn(
    provider: &dyn ChatProvider,
    catalog: &Catalog,
    item: &str,
    target: &EvalTarget,
    task: Task,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<OneTurnCase, ProviderError> {
    let mut vars = Vars::new();
    vars.insert("item".into(), item.to_string());
    vars.insert("items".into(), item.to_string());
    vars.insert("history".into(), titles(catalog, &target.history));
    let target_title = catalog.title(target.target).to_string();
    let (conversation, candidates) = match task {
        Task::Retrieval => {
            vars.insert("target_info".into(), item_info(catalog, target.target));
            let prompt = render_prompt(TemplateId::OneTurnRetrieval, &vars).expect("retrieval variables are complete");
            let reply = provider.complete(&[ChatMessage::user(prompt)], &CompletionParams::default())?;
            let mut turns = parse_generated_conversation(&reply);
            while turns.last().is_some_and(|t| t.speaker == Speaker::Assistant) {
                turns.pop();
            }
            let instruction = format!("Please give me {k} recommendations based on the chat history.");
            match turns.last_mut() {
                Some(last) => {
                    last.text = format!("{} {instruction}", last.text.trim());
                }
                None => turns.push(Turn::user(instruction)),
            }
            (turns, Vec::new())
        }
        Task::Ranking => {
            let mut exclude = target.history.clone();
            exclude.push(target.target);
            let mut candidates = sample_negatives(catalog, &exclude, RANKING_NEGATIVES, rng);
            if candidates.len() < RANKING_NEGATIVES {
                // small catalogs: top up with history items
                exclude = candidates.clone();
                exclude.push(target.target);
                let more = sample_negatives(catalog, &exclude, RANKING_NEGATIVES - candidates.len(), rng);
                candidates.extend(more);
            }
            candidates.push(target.target);
            candidates.shuffle(rng);
            let list = titles(catalog, &candidates);
            vars.insert("n".into(), candidates.len().to_string());
            vars.insert("candidates".into(), list.clone());
            let prompt = render_prompt(TemplateId::OneTurnRanking, &vars).expect("ranking variables are complete");
            let reply = provider.complete(&[ChatMessage::user(prompt)], &CompletionParams::default())?;
            let question = reply.trim().trim_matches('"').trim();
            let text = format!("{question}\nPlease rank these candidates based on the chat history: {list}.");
            (vec![Turn::user(text)], candidates)
        }
    };
    Ok(OneTurnCase { task, user_id: target.user_id, target: target.target, target_title, candidates, conversation })
}

/// Catalog titles in order of first mention in `text`.
pub fn mentioned_titles(catalog: &Catalog, text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut found: Vec<(usize, std::cmp::Reverse<usize>, &str)> = catalog
        .items()
        .iter()
        .filter_map(|i| lower.find(&i.title.to_lowercase()).map(|p| (p, std::cmp::Reverse(i.title.len()), i.title.as_str())))
        .collect();
    found.sort();
    found.into_iter().map(|(_, _, t)| t.to_string()).collect()
}

/// A scored one-turn response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneTurnRow {
    pub response: Vec<String>,
    pub truth: String,
    /// Ranking candidates; titles outside this list are dropped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
    pub score: f64,
}

impl OneTurnRow {
    pub fn new(task: Task, response: Vec<String>, truth: String, candidates: Vec<String>, k: usize) -> Self {
        let score = match task {
            Task::Retrieval => recall_at_k(&response, &truth, k),
            Task::Ranking => ndcg_at_k(&response, &truth, &candidates, k),
        };
        OneTurnRow { response, truth, candidates, score }
    }
}

fn same_title(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// 1 when the single positive is among the first `k` titles.
pub fn recall_at_k(response: &[String], truth: &str, k: usize) -> f64 {
    if response.iter().take(k).any(|t| same_title(t, truth)) {
        1.0
    } else {
        0.0
    }
}

/// Binary-relevance NDCG with one positive. Titles not in `candidates`
/// (when given) and repeats are dropped before ranking.
pub fn ndcg_at_k(response: &[String], truth: &str, candidates: &[String], k: usize) -> f64 {
    let mut kept: Vec<&String> = Vec::new();
    for t in response {
        let allowed = candidates.is_empty() || candidates.iter().any(|c| same_title(c, t));
        if allowed && !kept.iter().any(|x| same_title(x, t)) {
            kept.push(t);
        }
    }
    match kept.iter().position(|t| same_title(t, truth)) {
        Some(p) if p < k => 1.0 / ((p + 2) as f64).log2(),
        _ => 0.0,
    }
}

/// Mean Recall@k (retrieval) or NDCG@k (ranking) over rows.
pub fn one_turn_metrics(rows: &[OneTurnRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| r.score).sum::<f64>() / rows.len() as f64
}

pub fn metric_name(task: Task, k: usize) -> String {
    match task {
        Task::Retrieval => format!("recall@{k}"),
        Task::Ranking => format!("ndcg@{k}"),
    }
}

/// Metrics, the rows they came from, and the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sessions: Vec<SimSession>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<OneTurnRow>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn from_sessions(name: &str, sessions: Vec<SimSession>, k: usize, config: serde_json::Value) -> Result<Self, EvalError> {
        let m = session_metrics(&sessions, k)?;
        let mut metrics = BTreeMap::new();
        metrics.insert(format!("hit@{k}"), m.hit_at_k);
        metrics.insert(format!("at@{k}"), m.at_k);
        Ok(EvalReport { name: name.to_string(), metrics, sessions, rows: Vec::new(), config })
    }

    pub fn from_rows(name: &str, task: Task, k: usize, rows: Vec<OneTurnRow>, config: serde_json::Value) -> Self {
        let mut metrics = BTreeMap::new();
        metrics.insert(metric_name(task, k), one_turn_metrics(&rows));
        EvalReport { name: name.to_string(), metrics, sessions: Vec::new(), rows, config }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Metric table followed by row and configuration counts.
    pub fn render_table(&self) -> String {
        let width = self.metrics.keys().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{}\n{:<width$}  value\n", self.name, "metric");
        out.push_str(&"-".repeat(width + 9));
        out.push('\n');
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "{k:<width$}  {v:.4}");
        }
        let _ = writeln!(out, "sessions: {}  rows: {}", self.sessions.len(), self.rows.len());
        out
    }

    /// Per-session or per-case rows as line-JSON.
    pub fn write_rows(&self, mut out: impl Write) -> std::io::Result<()> {
        for s in &self.sessions {
            writeln!(out, "{}", serde_json::to_string(s).map_err(std::io::Error::other)?)?;
        }
        for r in &self.rows {
            writeln!(out, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }
}

/// `k` distinct items, uniformly or weighted by popularity.
fn sample_items(catalog: &Catalog, k: usize, mode: BaselineMode, rng: &mut ChaCha8Rng) -> Vec<ItemId> {
    let n = catalog.len();
    let k = k.min(n);
    match mode {
        BaselineMode::Random => rand::seq::index::sample(rng, n, k).into_iter().map(|i| ItemId(i as u32)).collect(),
        BaselineMode::Popularity => {
            let weighted: Vec<&crate::catalog::Item> = catalog.items().iter().filter(|i| i.popularity > 0).collect();
            let mut picked: Vec<ItemId> = weighted
                .choose_multiple_weighted(rng, k, |i| f64::from(i.popularity))
                .map(|it| it.map(|i| i.id).collect())
                .unwrap_or_default();
            if picked.len() < k {
                let rest: Vec<ItemId> = catalog.all_ids().into_iter().filter(|id| !picked.contains(id)).collect();
                picked.extend(rest.choose_multiple(rng, k - picked.len()).copied());
            }
            picked
        }
    }
}

/// Random or popularity baseline over `trials` one-turn cases.
///
/// Targets cycle through the catalog's test interactions, or are drawn
/// uniformly when there are none.
pub fn baseline(
    mode: BaselineMode,
    task: Task,
    catalog: &Catalog,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if trials == 0 {
        return Err(EvalError::Invalid("trials must be at least 1".into()));
    }
    if catalog.is_empty() {
        return Err(EvalError::Invalid("catalog is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = eval_targets(catalog);
    let mut rows = Vec::with_capacity(trials);
    for t in 0..trials {
        let target = if targets.is_empty() {
            EvalTarget { user_id: -1, target: ItemId(rng.gen_range(0..catalog.len() as u32)), history: Vec::new() }
        } else {
            targets[t % targets.len()].clone()
        };
        let truth = catalog.title(target.target).to_string();
        let row = match task {
            Task::Retrieval => {
                let picked = sample_items(catalog, k, mode, &mut rng);
                let response = picked.iter().map(|&id| catalog.title(id).to_string()).collect();
                OneTurnRow::new(task, response, truth, Vec::new(), k)
            }
            Task::Ranking => {
                let mut cands = sample_negatives(catalog, &[target.target], RANKING_NEGATIVES, &mut rng);
                cands.push(target.target);
                match mode {
                    BaselineMode::Random => cands.shuffle(&mut rng),
                    BaselineMode::Popularity => {
                        cands.sort_by(|a, b| catalog.popularity(*b).cmp(&catalog.popularity(*a)).then(a.cmp(b)))
                    }
                }
                let response: Vec<String> = cands.iter().map(|&id| catalog.title(id).to_string()).collect();
                OneTurnRow::new(task, response.clone(), truth, response, k)
            }
        };
        rows.push(row);
    }
    let config = serde_json::json!({"mode": mode, "task": task, "k": k, "trials": trials, "seed": seed, "items": catalog.len()});
    let name = format!("{} baseline, {} task", serde_json::to_value(mode).unwrap().as_str().unwrap_or(""), serde_json::to_value(task).unwrap().as_str().unwrap_or(""));
    Ok(EvalReport::from_rows(&name, task, k, rows, config))
}

/// Runs the agent on a one-turn case and scores its reply.
pub fn run_one_turn_case(agent: &Agent, case: &OneTurnCase, k: usize) -> Result<OneTurnRow, EvalError> {
    let mut session = agent.new_session();
    let (last, earlier) = case.conversation.split_last().ok_or_else(|| EvalError::Invalid("empty conversation".into()))?;
    session.context.turns.extend(earlier.iter().cloned());
    let result = agent.run_turn(&mut session, &last.text).map_err(|crate::turn::TurnError::Provider(e)| EvalError::Provider(e))?;
    let response = mentioned_titles(&agent.catalog, &result.response);
    let candidates: Vec<String> = case.candidates.iter().map(|&id| agent.catalog.title(id).to_string()).collect();
    Ok(OneTurnRow::new(case.task, response, case.target_title.clone(), candidates, k))
}
