//! Prompt template library and the `{name}` placeholder renderer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Placeholder values keyed by name.
pub type Vars = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    TaskDescription,
    Critic,
    PlanGeneration,
    IntentInputFirst,
    IntentOutputFirst,
    UserSimulator,
    OneTurnRetrieval,
    OneTurnRanking,
    ProfileExtraction,
    SyntheticDialogue,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::TaskDescription,
        TemplateId::Critic,
        TemplateId::PlanGeneration,
        TemplateId::IntentInputFirst,
        TemplateId::IntentOutputFirst,
        TemplateId::UserSimulator,
        TemplateId::OneTurnRetrieval,
        TemplateId::OneTurnRanking,
        TemplateId::ProfileExtraction,
        TemplateId::SyntheticDialogue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::TaskDescription => "task_description",
            TemplateId::Critic => "critic",
            TemplateId::PlanGeneration => "plan_generation",
            TemplateId::IntentInputFirst => "intent_input_first",
            TemplateId::IntentOutputFirst => "intent_output_first",
            TemplateId::UserSimulator => "user_simulator",
            TemplateId::OneTurnRetrieval => "one_turn_retrieval",
            TemplateId::OneTurnRanking => "one_turn_ranking",
            TemplateId::ProfileExtraction => "profile_extraction",
            TemplateId::SyntheticDialogue => "synthetic_dialogue",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::TaskDescription => include_str!("../../templates/task_description.txt"),
            TemplateId::Critic => include_str!("../../templates/critic.txt"),
            TemplateId::PlanGeneration => include_str!("../../templates/plan_generation.txt"),
            TemplateId::IntentInputFirst => include_str!("../../templates/intent_input_first.txt"),
            TemplateId::IntentOutputFirst => include_str!("../../templates/intent_output_first.txt"),
            TemplateId::UserSimulator => include_str!("../../templates/user_simulator.txt"),
            TemplateId::OneTurnRetrieval => include_str!("../../templates/one_turn_retrieval.txt"),
            TemplateId::OneTurnRanking => include_str!("../../templates/one_turn_ranking.txt"),
            TemplateId::ProfileExtraction => include_str!("../../templates/profile_extraction.txt"),
            TemplateId::SyntheticDialogue => include_str!("../../templates/synthetic_dialogue.txt"),
        }
    }

    /// Placeholder names used by the body, in first-appearance order.
    pub fn placeholders(self) -> Vec<String> {
        placeholders(self.body())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown template {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("missing placeholder values: {}", .0.join(", "))]
    MissingPlaceholder(Vec<String>),
}

/// A `{name}` placeholder occurrence: byte range in the template plus name.
fn scan(template: &str) -> Vec<(std::ops::Range<usize>, &str)> {
    let bytes = template.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            let is_ident = j > start && !bytes[start].is_ascii_digit();
            if is_ident && bytes.get(j) == Some(&b'}') {
                out.push((i..j + 1, &template[start..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub fn placeholders(template: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for (_, name) in scan(template) {
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    names
}

/// Single-pass substitution: values are inserted verbatim and never
/// rescanned. Braces that do not enclose an identifier are literal.
pub fn render(template: &str, vars: &Vars) -> Result<String, TemplateError> {
    let found = scan(template);
    let mut missing: Vec<String> = Vec::new();
    for (_, name) in &found {
        if !vars.contains_key(*name) && !missing.iter().any(|m| m == name) {
            missing.push(name.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(TemplateError::MissingPlaceholder(missing));
    }
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for (range, name) in found {
        out.push_str(&template[last..range.start]);
        out.push_str(&vars[name]);
        last = range.end;
    }
    out.push_str(&template[last..]);
    Ok(out)
}

pub fn render_prompt(id: TemplateId, vars: &Vars) -> Result<String, TemplateError> {
    render(id.body(), vars)
}

/// Name of the pseudo-tool the task description asks the actor to invoke
/// with a whole plan.
pub const TOOL_EXECUTOR_NAME: &str = "Tool Executor";

const TOOL_EXECUTOR_DESC: &str = "The {tool_exe_name} runs a tool using plan. Its input is the whole plan as a numbered list \
with one step per tool, written like \"1. <tool name> (<tool input>); 2. <tool name> (<tool input>)\". \
The input of each tool goes inside the parentheses after its name. \
The observation is the output of the last tool in the plan.";

/// Catalog- and registry-dependent values shared by every prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    /// Singular domain noun, e.g. "game".
    pub item: String,
    /// Rendered `Tool Name:` / `Tool Description:` blocks.
    pub tools_desc: String,
    /// Comma-separated tool names.
    pub tool_names: String,
    pub table_info: String,
}

impl PromptContext {
    /// Variables every template may reference: domain noun forms, tool
    /// aliases, tool descriptions and the table schema.
    pub fn base_vars(&self) -> Vars {
        let mut v = Vars::new();
        let mut put = |k: &str, val: &str| {
            v.insert(k.to_string(), val.to_string());
        };
        put("item", &self.item);
        put("ITEM", &self.item.to_uppercase());
        put("items", &self.item);
        put("LookUpTool", "Query Tool");
        put("BufferStoreTool", "Candidates Storing Tool");
        put("RankingTool", "Ranking Tool");
        put("MapTool", "Candidate Fetching Tool");
        put("HardFilterTool", "SQL Retrieval Tool");
        put("SoftFilterTool", "ItemCF Retrieval Tool");
        put("tool_exe_name", TOOL_EXECUTOR_NAME);
        put("tools_desc", &self.tools_desc);
        put("tool_description", &self.tools_desc);
        put("tool_names", &self.tool_names);
        put("table_info", &self.table_info);
        let exe_desc = render(TOOL_EXECUTOR_DESC, &v).expect("executor description only uses tool_exe_name");
        v.insert("tool_exe_desc".to_string(), exe_desc);
        v
    }

    /// `base_vars` extended with `extra`; later keys win.
    pub fn vars_with<'a>(&self, extra: impl IntoIterator<Item = (&'a str, String)>) -> Vars {
        let mut v = self.base_vars();
        for (k, val) in extra {
            v.insert(k.to_string(), val);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PromptContext {
        PromptContext {
            item: "game".into(),
            tools_desc: "TOOLS".into(),
            tool_names: "A, B".into(),
            table_info: "TABLE".into(),
        }
    }

    #[test]
    fn task_description_renders_domain_noun() {
        let vars = ctx().vars_with([
            ("examples", String::new()),
            ("history", String::new()),
            ("input", "hi".to_string()),
            ("reflection", String::new()),
            ("agent_scratchpad", String::new()),
        ]);
        let out = render_prompt(TemplateId::TaskDescription, &vars).unwrap();
        assert!(out.contains("You are a conversational game recommendation assistant"));
        assert!(out.contains("Human: hi"));
        assert!(!out.contains("{item}"));
    }

    #[test]
    fn missing_placeholder_is_reported() {
        let mut vars = ctx().base_vars();
        vars.remove("tools_desc");
        for k in ["examples", "history", "input", "reflection", "agent_scratchpad"] {
            vars.insert(k.into(), String::new());
        }
        assert_eq!(
            render_prompt(TemplateId::TaskDescription, &vars),
            Err(TemplateError::MissingPlaceholder(vec!["tools_desc".into()]))
        );
    }

    #[test]
    fn critic_has_yes_rule() {
        assert!(TemplateId::Critic.body().contains("you should say \"Yes\""));
        assert!(TemplateId::UserSimulator.body().contains("You are a user chatting with a recommender"));
    }

    #[test]
    fn json_braces_are_literal_and_values_not_rescanned() {
        let mut v = Vars::new();
        v.insert("a".into(), "{b}".into());
        assert_eq!(render("x {a} {\"k\": 1} {} {1x}", &v).unwrap(), "x {b} {\"k\": 1} {} {1x}");
    }

    #[test]
    fn every_template_renders_with_its_own_placeholders() {
        for id in TemplateId::ALL {
            let vars: Vars = id.placeholders().into_iter().map(|p| (p.clone(), format!("<{p}>"))).collect();
            let out = render_prompt(id, &vars).unwrap();
            assert!(placeholders(&out).iter().all(|p| !vars.contains_key(p)), "{id}");
            assert_eq!(id.name().parse::<TemplateId>().unwrap(), id);
        }
    }

    #[test]
    fn base_vars_cover_shared_slots() {
        let v = ctx().base_vars();
        assert_eq!(v["ITEM"], "GAME");
        assert!(v["tool_exe_desc"].contains("Tool Executor"));
    }
}
