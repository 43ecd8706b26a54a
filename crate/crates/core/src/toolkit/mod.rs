//! The six bus tools and the registry that runs them.

mod tools;

use crate::catalog::Catalog;
use crate::llm::templates::{render, Vars};
use crate::llm::PromptContext;
use crate::memory::{CandidateBus, ToolCallRecord, ToolErrorKind, ToolOutput, UserProfile};
use crate::recmodels::{Ranker, SimilarityModel};

pub use tools::{
    parse_title_list, soft_keep_count, soft_threshold_select, CandidateFetchingTool, CandidatesStoringTool,
    ItemCfRetrievalTool, QueryTool, RankingInput, RankingTool, SqlRetrievalTool,
};

pub const CANDIDATES_STORING_TOOL: &str = "Candidates Storing Tool";
pub const QUERY_TOOL: &str = "Query Tool";
pub const SQL_RETRIEVAL_TOOL: &str = "SQL Retrieval Tool";
pub const ITEMCF_RETRIEVAL_TOOL: &str = crate::memory::ITEMCF_TOOL;
pub const RANKING_TOOL: &str = "Ranking Tool";
pub const CANDIDATE_FETCHING_TOOL: &str = "Candidate Fetching Tool";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolKind {
    Storing,
    Query,
    HardRetrieval,
    SoftRetrieval,
    Ranking,
    Fetching,
}

impl ToolKind {
    /// Tools whose results must be surfaced through the fetching tool.
    pub fn needs_fetch(self) -> bool {
        matches!(self, ToolKind::HardRetrieval | ToolKind::SoftRetrieval | ToolKind::Ranking)
    }
}

/// Limits applied by the tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToolLimits {
    /// Maximum survivors of a hard-condition retrieval.
    pub hard_cap: usize,
    /// Soft retrieval keeps this percentage of the scored candidates.
    pub soft_top_percent: usize,
    pub fetch_default: usize,
    pub query_max_chars: usize,
}

impl Default for ToolLimits {
    fn default() -> Self {
        ToolLimits { hard_cap: 1000, soft_top_percent: 5, fetch_default: 5, query_max_chars: 2000 }
    }
}

/// Shared, read-only dependencies of a tool call.
pub struct ToolContext<'a> {
    pub catalog: &'a Catalog,
    pub model: &'a SimilarityModel,
    pub ranker: &'a dyn Ranker,
    /// Composed long- and short-term profile.
    pub profile: &'a UserProfile,
    pub limits: ToolLimits,
}

pub trait Tool: Send + Sync {
    fn name(&self) -> &'static str;
    /// Description template; `{item}` and `{ITEM}` are filled at render time.
    fn description(&self) -> &'static str;
    fn kind(&self) -> ToolKind;
    /// Runs against the bus. Failures are reported in the output.
    fn run(&self, input: &str, bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput;
}

pub struct ToolRegistry {
    tools: Vec<Box<dyn Tool>>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.tools.iter().map(|t| t.name())).finish()
    }
}

impl Default for ToolRegistry {
    fn default() -> Self {
        ToolRegistry::standard()
    }
}

impl ToolRegistry {
    /// All six tools, in prompt order.
    pub fn standard() -> Self {
        ToolRegistry {
            tools: vec![
                Box::new(CandidatesStoringTool),
                Box::new(CandidateFetchingTool),
                Box::new(QueryTool),
                Box::new(SqlRetrievalTool),
                Box::new(ItemCfRetrievalTool),
                Box::new(RankingTool),
            ],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tools.iter().map(|t| t.name()).collect()
    }

    /// Case-insensitive lookup by name.
    pub fn get(&self, name: &str) -> Option<&dyn Tool> {
        let name = name.trim();
        self.tools.iter().find(|t| t.name().eq_ignore_ascii_case(name)).map(|t| t.as_ref())
    }

    /// `Tool Name:` / `Tool Description:` blocks for the `{tools_desc}` slot.
    pub fn tools_desc(&self, item: &str) -> String {
        let mut vars = Vars::new();
        vars.insert("item".into(), item.to_string());
        vars.insert("ITEM".into(), item.to_uppercase());
        self.tools
            .iter()
            .map(|t| {
                let desc = render(t.description(), &vars).expect("tool descriptions use item and ITEM only");
                format!("\nTool Name: {}\nTool Description: {}", t.name(), desc.trim_end())
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn prompt_context(&self, item: &str, catalog: &Catalog) -> PromptContext {
        PromptContext {
            item: item.to_string(),
            tools_desc: self.tools_desc(item),
            tool_names: self.names().join(", "),
            table_info: catalog.table_info(),
        }
    }

    /// Runs one tool and appends exactly one record to the tracker.
    pub fn execute<'b>(
        &self,
        tool_name: &str,
        input: &str,
        bus: &'b mut CandidateBus,
        ctx: &ToolContext<'_>,
    ) -> &'b ToolCallRecord {
        let before = bus.len();
        let (name, mut output) = match self.get(tool_name) {
            Some(tool) => (tool.name().to_string(), tool.run(input, bus, ctx)),
            None => (
                tool_name.trim().to_string(),
                ToolOutput::failed(ToolErrorKind::UnknownTool, format!("unknown tool {:?}", tool_name.trim())),
            ),
        };
        output.candidates_before = before;
        output.remaining = bus.len();
        bus.record_step(ToolCallRecord { tool_name: name, tool_input: input.to_string(), output });
        bus.tracker.last().expect("just pushed")
    }
}
