use std::collections::HashSet;

use serde::Deserialize;

use super::{
    Tool, ToolContext, ToolKind, CANDIDATES_STORING_TOOL, CANDIDATE_FETCHING_TOOL, ITEMCF_RETRIEVAL_TOOL, QUERY_TOOL,
    RANKING_TOOL, SQL_RETRIEVAL_TOOL,
};
use crate::catalog::{guard, Catalog, ItemId, ResultTable, SqlError, SqlValue};
use crate::memory::{CandidateBus, ToolErrorKind, ToolOutput};
use crate::recmodels::{RankRequest, RankSchema};

fn sql_failure(e: SqlError) -> ToolOutput {
    match e {
        SqlError::Policy(m) => ToolOutput::failed(ToolErrorKind::Policy, m),
        SqlError::Syntax(m) => ToolOutput::failed(ToolErrorKind::SqlSyntax, m),
    }
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].trim();
        }
    }
    s
}

pub struct CandidatesStoringTool;

impl Tool for CandidatesStoringTool {
    fn name(&self) -> &'static str {
        CANDIDATES_STORING_TOOL
    }

    fn description(&self) -> &'static str {
        include_str!("../../templates/tool_candidates_storing.txt")
    }

    fn kind(&self) -> ToolKind {
        ToolKind::Storing
    }

    fn run(&self, input: &str, bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput {
        let titles: Vec<&str> = input.split(';').map(strip_quotes).filter(|t| !t.is_empty()).collect();
        let mut ids = Vec::new();
        let mut missing = Vec::new();
        for t in &titles {
            match ctx.catalog.resolve_title(t) {
                Some(id) if !ids.contains(&id) => ids.push(id),
                Some(_) => {}
                None => missing.push(t.to_string()),
            }
        }
        if ids.is_empty() {
            return ToolOutput::failed(ToolErrorKind::NoCandidates, "no valid candidates: none of the titles are in the catalog")
                .note(format!("unresolved titles: {}", missing.join("; ")));
        }
        bus.candidates = ids;
        bus.ranked = false;
        let mut out = ToolOutput::default();
        if !missing.is_empty() {
            out.notes.push(format!("unresolved titles: {}", missing.join("; ")));
        }
        out
    }
}

/// Renders a result table as `col | col` lines, capped at `max_chars`.
fn render_table(table: &ResultTable, max_chars: usize) -> String {
    let mut lines = vec![table.columns.join(" | ")];
    for row in &table.rows {
        lines.push(row.iter().map(SqlValue::to_string).collect::<Vec<_>>().join(" | "));
    }
    if table.rows.is_empty() {
        lines.push("(no rows)".to_string());
    }
    let text = lines.join("\n");
    if text.chars().count() <= max_chars {
        return text;
    }
    let note = format!("\n... (truncated, {} rows in total)", table.rows.len());
    let keep = max_chars.saturating_sub(note.chars().count());
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(&note);
    out
}

pub struct QueryTool;

impl Tool for QueryTool {
    fn name(&self) -> &'static str {
        QUERY_TOOL
    }

    fn description(&self) -> &'static str {
        include_str!("../../templates/tool_query.txt")
    }

    fn kind(&self) -> ToolKind {
        ToolKind::Query
    }

    fn run(&self, input: &str, _bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput {
        let table = match ctx.catalog.execute_sql(strip_quotes(input)) {
            Ok(t) => t,
            Err(e) => return sql_failure(e),
        };
        let mut out = ToolOutput { result: Some(render_table(&table, ctx.limits.query_max_chars)), ..Default::default() };
        if table.columns.iter().any(|c| c.eq_ignore_ascii_case("id")) {
            out.notes.push("warning: id selected; item ids are internal and should not be shown".into());
        }
        out
    }
}

/// Turns tool input into a full `SELECT id FROM ...` statement. Bare
/// conditions become the `WHERE` clause of a query over `items`.
#[allow(clippy::result_large_err)]
fn retrieval_statement(input: &str) -> Result<String, ToolOutput> {
    let input = strip_quotes(input);
    let tokens = guard::tokenize(input);
    let Some(first) = tokens.first() else {
        return Err(ToolOutput::failed(ToolErrorKind::InvalidInput, "empty SQL input"));
    };
    let full = if first.is_word(input, "SELECT") {
        input.to_string()
    } else {
        format!("SELECT id FROM items WHERE {input}")
    };
    if guard::uses_limit(&full) {
        return Err(ToolOutput::failed(
            ToolErrorKind::Policy,
            "do not use the LIMIT keyword; select all items that meet the conditions",
        ));
    }
    let statement = guard::check_read_only(&full)
        .map_err(|v| ToolOutput::failed(ToolErrorKind::Policy, v.to_string()))?
        .to_string();
    let span = guard::projection_span(&statement).ok_or_else(|| {
        ToolOutput::failed(ToolErrorKind::InvalidInput, "the query must select from the items table")
    })?;
    Ok(format!("{}id {}", &statement[..span.start], &statement[span.end..]))
}

pub struct SqlRetrievalTool;

impl Tool for SqlRetrievalTool {
    fn name(&self) -> &'static str {
        SQL_RETRIEVAL_TOOL
    }

    fn description(&self) -> &'static str {
        include_str!("../../templates/tool_sql_retrieval.txt")
    }

    fn kind(&self) -> ToolKind {
        ToolKind::HardRetrieval
    }

    fn run(&self, input: &str, bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput {
        let statement = match retrieval_statement(input) {
            Ok(s) => s,
            Err(out) => return out,
        };
        let table = match ctx.catalog.execute_sql(&statement) {
            Ok(t) => t,
            Err(e) => return sql_failure(e),
        };
        let matched: HashSet<u32> = table
            .rows
            .iter()
            .filter_map(|r| match r.first() {
                Some(SqlValue::Integer(v)) => u32::try_from(*v).ok(),
                _ => None,
            })
            .collect();
        let mut kept: Vec<ItemId> = bus.candidates.iter().copied().filter(|c| matched.contains(&c.0)).collect();
        let mut out = ToolOutput { conditions: Some(input.trim().to_string()), ..Default::default() };
        if kept.len() > ctx.limits.hard_cap {
            let total = kept.len();
            kept = cap_by_popularity(&kept, ctx.catalog, ctx.limits.hard_cap);
            out.notes.push(format!("{total} matches capped to the {} most popular", ctx.limits.hard_cap));
        }
        if kept.is_empty() {
            out.notes.push("0 candidates matched; the conditions may be too strict".into());
        }
        bus.candidates = kept;
        out
    }
}

/// The `cap` most popular of `ids` (ties by lower id), in their original order.
fn cap_by_popularity(ids: &[ItemId], catalog: &Catalog, cap: usize) -> Vec<ItemId> {
    let mut by_pop = ids.to_vec();
    by_pop.sort_by(|a, b| catalog.popularity(*b).cmp(&catalog.popularity(*a)).then(a.cmp(b)));
    let keep: HashSet<ItemId> = by_pop.into_iter().take(cap).collect();
    ids.iter().copied().filter(|i| keep.contains(i)).collect()
}

/// Nearest-rank count for the top `percent` of `n` scores, at least one
/// when `n > 0`.
pub fn soft_keep_count(n: usize, percent: usize) -> usize {
    if n == 0 {
        return 0;
    }
    (n * percent).div_ceil(100).max(1)
}

/// Indexes of the scores at or above the nearest-rank threshold, ordered by
/// descending score with ties in input order.
pub fn soft_threshold_select(scores: &[f64], percent: usize) -> Vec<usize> {
    let k = soft_keep_count(scores.len(), percent);
    if k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let threshold = scores[order[k - 1]];
    order.into_iter().filter(|&i| scores[i] >= threshold).collect()
}

/// Parses a JSON list, a Python-style list, or a `;`-separated string.
pub fn parse_title_list(input: &str) -> Vec<String> {
    let s = input.trim();
    if let Ok(v) = serde_json::from_str::<Vec<String>>(s) {
        return v.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    }
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let mut out = Vec::new();
        let mut cur = String::new();
        let mut quote: Option<char> = None;
        for c in inner.chars() {
            match (quote, c) {
                (None, '\'' | '"') => quote = Some(c),
                (Some(q), c) if c == q => quote = None,
                (None, ',') => out.push(std::mem::take(&mut cur)),
                _ => cur.push(c),
            }
        }
        out.push(cur);
        return out.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    }
    s.split(';').map(|t| strip_quotes(t).to_string()).filter(|t| !t.is_empty()).collect()
}

pub struct ItemCfRetrievalTool;

impl Tool for ItemCfRetrievalTool {
    fn name(&self) -> &'static str {
        ITEMCF_RETRIEVAL_TOOL
    }

    fn description(&self) -> &'static str {
        include_str!("../../templates/tool_itemcf_retrieval.txt")
    }

    fn kind(&self) -> ToolKind {
        ToolKind::SoftRetrieval
    }

    fn run(&self, input: &str, bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput {
        let mut out = ToolOutput::default();
        let mut missing = Vec::new();
        for title in parse_title_list(input) {
            match ctx.catalog.resolve_title(&title) {
                Some(id) if !out.seed_ids.contains(&id) => {
                    out.seed_ids.push(id);
                    out.seeds.push(ctx.catalog.title(id).to_string());
                }
                Some(_) => {}
                None => missing.push(title),
            }
        }
        if !missing.is_empty() {
            out.notes.push(format!("unresolved seeds: {}", missing.join("; ")));
        }
        if out.seed_ids.is_empty() {
            let mut failed = ToolOutput::failed(ToolErrorKind::InvalidInput, "no seed title matches a catalog item");
            failed.notes = out.notes;
            return failed;
        }
        // seeds are what the user already named; they are not recommended back
        let pool: Vec<ItemId> = bus.candidates.iter().copied().filter(|c| !out.seed_ids.contains(c)).collect();
        let scores = ctx.model.score_by_seeds(&out.seed_ids, &pool).expect("seed list is non-empty");
        let keep = soft_threshold_select(&scores, ctx.limits.soft_top_percent);
        bus.candidates = keep.into_iter().map(|i| pool[i]).collect();
        bus.ranked = false;
        out.notes.push(format!("kept top {}% of {} scored candidates", ctx.limits.soft_top_percent, pool.len()));
        out
    }
}

/// Wire format of the ranking tool input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default)]
pub struct RankingInput {
    pub schema: Option<String>,
    #[serde(deserialize_with = "string_or_list")]
    pub prefer: Vec<String>,
    #[serde(deserialize_with = "string_or_list")]
    pub unwanted: Vec<String>,
}

fn string_or_list<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
        Null(()),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) if s.trim().is_empty() => vec![],
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
        OneOrMany::Null(()) => vec![],
    })
}

impl RankingInput {
    pub fn parse(input: &str) -> Result<RankingInput, String> {
        let s = strip_quotes(input);
        let (Some(a), Some(b)) = (s.find('{'), s.rfind('}')) else {
            return Err("ranking input must be a JSON object with keys \"schema\", \"prefer\" and \"unwanted\"".into());
        };
        if b < a {
            return Err("ranking input must be a JSON object".into());
        }
        serde_json::from_str(&s[a..=b]).map_err(|e| format!("invalid ranking input: {e}"))
    }
}

pub struct RankingTool;

impl Tool for RankingTool {
    fn name(&self) -> &'static str {
        RANKING_TOOL
    }

    fn description(&self) -> &'static str {
        include_str!("../../templates/tool_ranking.txt")
    }

    fn kind(&self) -> ToolKind {
        ToolKind::Ranking
    }

    fn run(&self, input: &str, bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput {
        let parsed = match RankingInput::parse(input) {
            Ok(p) => p,
            Err(e) => return ToolOutput::failed(ToolErrorKind::InvalidInput, e),
        };
        let mut prefer = parsed.prefer.clone();
        let mut unwanted = parsed.unwanted.clone();
        let has = |list: &[String], x: &str| list.iter().any(|y| y.trim().eq_ignore_ascii_case(x.trim()));
        for like in &ctx.profile.like {
            if ctx.catalog.resolve_title(like).is_some() && !has(&prefer, like) && !has(&unwanted, like) {
                prefer.push(like.clone());
            }
        }
        for dislike in &ctx.profile.dislike {
            if ctx.catalog.resolve_title(dislike).is_some() && !has(&unwanted, dislike) && !has(&prefer, dislike) {
                unwanted.push(dislike.clone());
            }
        }
        let seeds = bus.last_itemcf_seeds().map(<[ItemId]>::to_vec);
        let schema = match parsed.schema.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => match s.to_lowercase().parse::<RankSchema>() {
                Ok(schema) => schema,
                Err(e) => return ToolOutput::failed(ToolErrorKind::InvalidInput, e),
            },
            None if !prefer.is_empty() => RankSchema::Preference,
            None if seeds.is_some() => RankSchema::Similarity,
            None => RankSchema::Popularity,
        };
        let req = RankRequest { schema, prefer, unwanted };
        let outcome = ctx.ranker.rank(&req, &bus.candidates, seeds.as_deref().unwrap_or(&[]), ctx.catalog);
        bus.candidates = outcome.order;
        bus.ranked = true;
        let mut out = ToolOutput { schema: outcome.schema_used, notes: outcome.warnings, ..Default::default() };
        if outcome.removed > 0 {
            out.notes.push(format!("removed {} unwanted", outcome.removed));
        }
        if !outcome.unresolved.is_empty() {
            out.notes.push(format!("unresolved titles: {}", outcome.unresolved.join("; ")));
        }
        out
    }
}

pub struct CandidateFetchingTool;

impl Tool for CandidateFetchingTool {
    fn name(&self) -> &'static str {
        CANDIDATE_FETCHING_TOOL
    }

    fn description(&self) -> &'static str {
        include_str!("../../templates/tool_candidate_fetching.txt")
    }

    fn kind(&self) -> ToolKind {
        ToolKind::Fetching
    }

    fn run(&self, input: &str, bus: &mut CandidateBus, ctx: &ToolContext<'_>) -> ToolOutput {
        let mut out = ToolOutput::default();
        let n = match strip_quotes(input).parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                if !input.trim().is_empty() {
                    out.notes.push(format!("input {:?} is not a positive integer; using {}", input.trim(), ctx.limits.fetch_default));
                }
                ctx.limits.fetch_default
            }
        };
        out.items = bus.candidates.iter().take(n).map(|&id| ctx.catalog.title(id).to_string()).collect();
        if out.items.is_empty() {
            out.notes.push("no items matched".into());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::games_toy;
    use crate::memory::UserProfile;
    use crate::recmodels::{ItemCfRanker, SimilarityModel};
    use crate::toolkit::{ToolLimits, ToolRegistry};
    use std::sync::Arc;

    struct Fixture {
        catalog: Catalog,
        model: Arc<SimilarityModel>,
        ranker: ItemCfRanker,
    }

    fn fixture() -> Fixture {
        let catalog = games_toy();
        let model = Arc::new(SimilarityModel::build(&catalog.split().train, catalog.len()));
        let ranker = ItemCfRanker::new(model.clone());
        Fixture { catalog, model, ranker }
    }

    impl Fixture {
        fn ctx<'a>(&'a self, profile: &'a UserProfile) -> ToolContext<'a> {
            ToolContext {
                catalog: &self.catalog,
                model: &self.model,
                ranker: &self.ranker,
                profile,
                limits: ToolLimits::default(),
            }
        }
    }

    fn run(f: &Fixture, bus: &mut CandidateBus, tool: &str, input: &str) -> ToolOutput {
        let profile = UserProfile::default();
        ToolRegistry::standard().execute(tool, input, bus, &f.ctx(&profile)).output.clone()
    }

    #[test]
    fn storing_tool_resolves_titles() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, CANDIDATES_STORING_TOOL, "Fortnite; Call of Duty");
        assert_eq!(bus.len(), 2);
        assert_eq!(out.remaining, 2);
        assert_eq!(out.candidates_before, 20);

        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, CANDIDATES_STORING_TOOL, "Fortnite; Nonexistent Game");
        assert_eq!(bus.len(), 1);
        assert!(out.notes[0].contains("Nonexistent Game"));

        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, CANDIDATES_STORING_TOOL, "Nope; Nada");
        assert_eq!(out.error.unwrap().kind, ToolErrorKind::NoCandidates);
        assert_eq!(bus.len(), 20);
    }

    #[test]
    fn query_tool_leaves_bus_alone() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, QUERY_TOOL, "SELECT description FROM items WHERE title LIKE '%Fortnite%'");
        let desc = &f.catalog.item(f.catalog.resolve_title("Fortnite").unwrap()).unwrap().description;
        assert!(out.result.unwrap().contains(desc.as_str()));
        assert_eq!(bus.len(), 20);
        let out = run(&f, &mut bus, QUERY_TOOL, "SELECT id FROM items");
        assert!(out.error.is_none());
        assert!(out.notes[0].contains("id selected"));
        let out = run(&f, &mut bus, QUERY_TOOL, "DELETE FROM items");
        assert_eq!(out.error.unwrap().kind, ToolErrorKind::Policy);
    }

    #[test]
    fn query_output_is_capped() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, QUERY_TOOL, "SELECT a.description, b.description FROM items a, items b");
        let text = out.result.unwrap();
        assert!(text.chars().count() <= 2000);
        assert!(text.ends_with("(truncated, 400 rows in total)"));
    }

    #[test]
    fn retrieval_statement_rewrites_projection() {
        assert_eq!(retrieval_statement("price < 5").unwrap(), "SELECT id FROM items WHERE price < 5");
        assert_eq!(
            retrieval_statement("SELECT title, price FROM items WHERE price < 5;").unwrap(),
            "SELECT id FROM items WHERE price < 5"
        );
        let err = retrieval_statement("SELECT * FROM items LIMIT 3").unwrap_err();
        assert_eq!(err.error.unwrap().kind, ToolErrorKind::Policy);
    }

    #[test]
    fn sql_retrieval_intersects_with_bus() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        run(&f, &mut bus, CANDIDATES_STORING_TOOL, "Fortnite; Gears of War; Portal 2");
        let out = run(&f, &mut bus, SQL_RETRIEVAL_TOOL, "SELECT * FROM items WHERE title LIKE '%war%'");
        assert_eq!(bus.candidates, vec![f.catalog.resolve_title("Gears of War").unwrap()]);
        assert_eq!(out.remaining, 1);
        let out = run(&f, &mut bus, SQL_RETRIEVAL_TOOL, "price > 1000");
        assert!(bus.is_empty());
        assert!(out.notes.iter().any(|n| n.starts_with("0 candidates")));
        let out = run(&f, &mut bus, SQL_RETRIEVAL_TOOL, "SELEC * FORM items");
        assert!(out.error.is_some());
    }

    #[test]
    fn soft_threshold_rules() {
        assert_eq!(soft_keep_count(100, 5), 5);
        assert_eq!(soft_keep_count(3, 5), 1);
        assert_eq!(soft_keep_count(0, 5), 0);
        assert_eq!(soft_keep_count(21, 5), 2);
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(soft_threshold_select(&scores, 5), vec![99, 98, 97, 96, 95]);
        assert_eq!(soft_threshold_select(&[0.1, 0.3, 0.2], 5), vec![1]);
        assert_eq!(soft_threshold_select(&[0.5, 0.9, 0.9, 0.1], 5), vec![1, 2]);
    }

    #[test]
    fn title_lists() {
        let want = vec!["Portal 2".to_string(), "Baldur's Gate 3".to_string()];
        assert_eq!(parse_title_list(r#"["Portal 2", "Baldur's Gate 3"]"#), want);
        assert_eq!(parse_title_list(r#"['Portal 2', "Baldur's Gate 3"]"#), want);
        assert_eq!(parse_title_list("Portal 2; Baldur's Gate 3"), want);
    }

    #[test]
    fn itemcf_excludes_seeds_and_records_them() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, ITEMCF_RETRIEVAL_TOOL, "['Portal 2']");
        let portal = f.catalog.resolve_title("Portal 2").unwrap();
        assert_eq!(out.seed_ids, vec![portal]);
        assert!(!bus.candidates.contains(&portal));
        assert!(!bus.is_empty() && bus.len() < 20);
        let out = run(&f, &mut bus, ITEMCF_RETRIEVAL_TOOL, "['Made Up']");
        assert_eq!(out.error.unwrap().kind, ToolErrorKind::InvalidInput);
    }

    #[test]
    fn ranking_defaults_and_errors() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, RANKING_TOOL, r#"{"schema":"popularity"}"#);
        assert_eq!(out.schema, Some(RankSchema::Popularity));
        let pops: Vec<u32> = bus.candidates.iter().map(|&c| f.catalog.popularity(c)).collect();
        assert!(pops.windows(2).all(|w| w[0] >= w[1]));

        let out = run(&f, &mut bus, RANKING_TOOL, r#"{"schema":"preference","prefer":[]}"#);
        assert_eq!(out.schema, Some(RankSchema::Popularity));
        assert!(!out.notes.is_empty());

        let out = run(&f, &mut bus, RANKING_TOOL, r#"{"prefer":["Celeste"],"unwanted":["Fortnite"]}"#);
        assert_eq!(out.schema, Some(RankSchema::Preference));
        assert_eq!(bus.len(), 19);

        let out = run(&f, &mut bus, RANKING_TOOL, "by preference");
        assert_eq!(out.error.unwrap().kind, ToolErrorKind::InvalidInput);
    }

    #[test]
    fn ranking_merges_profile() {
        let f = fixture();
        let profile = UserProfile { like: vec!["celeste".into(), "puzzle".into()], dislike: vec!["Fortnite".into()], expect: vec![] };
        let mut bus = CandidateBus::new(&f.catalog);
        let rec = ToolRegistry::standard().execute(RANKING_TOOL, "{}", &mut bus, &f.ctx(&profile)).clone();
        assert_eq!(rec.output.schema, Some(RankSchema::Preference));
        assert!(!bus.candidates.contains(&f.catalog.resolve_title("Fortnite").unwrap()));
    }

    #[test]
    fn fetching_defaults() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        bus.candidates.truncate(3);
        let out = run(&f, &mut bus, CANDIDATE_FETCHING_TOOL, "2");
        assert_eq!(out.items, vec![f.catalog.title(ItemId(0)).to_string(), f.catalog.title(ItemId(1)).to_string()]);
        assert_eq!(run(&f, &mut bus, CANDIDATE_FETCHING_TOOL, "10").items.len(), 3);
        let mut bus = CandidateBus::new(&f.catalog);
        assert_eq!(run(&f, &mut bus, CANDIDATE_FETCHING_TOOL, "five").items.len(), 5);
        bus.candidates.clear();
        assert!(run(&f, &mut bus, CANDIDATE_FETCHING_TOOL, "").notes.contains(&"no items matched".to_string()));
    }

    #[test]
    fn unknown_tool_is_recorded() {
        let f = fixture();
        let mut bus = CandidateBus::new(&f.catalog);
        let out = run(&f, &mut bus, "Web Search Tool", "x");
        assert_eq!(out.error.unwrap().kind, ToolErrorKind::UnknownTool);
        assert_eq!(bus.tracker.len(), 1);
    }

    #[test]
    fn tools_desc_renders_every_tool() {
        let reg = ToolRegistry::standard();
        let desc = reg.tools_desc("game");
        for name in reg.names() {
            assert!(desc.contains(&format!("Tool Name: {name}")));
        }
        assert!(desc.contains("\"GAME1; GAME2; GAME3\""));
        assert!(!desc.contains("{item}"));
    }
}
