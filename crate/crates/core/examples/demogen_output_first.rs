//! Output-first demonstration generation: intents are written for a fixed
//! plan, re-planned, and kept only when the tool sequence matches.

use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::demogen::{extend_store, DemoGenerator};
use recagent::llm::ScriptedProvider;
use recagent::planner::{parse_plan, DemoStore, HashEmbedder, Planner};
use recagent::toolkit::ToolRegistry;

fn main() {
    let catalog = games_toy();
    let registry = ToolRegistry::standard();
    let demos = Arc::new(DemoStore::seed(&HashEmbedder).unwrap());
    let planner = Planner::new(registry.prompt_context("game", &catalog), demos.clone(), Arc::new(HashEmbedder));

    let provider = ScriptedProvider::sequence([
        "1. Show me some cheap TYPE games.\n2. I'd like popular TYPE games.\n3. What's similar to ITEM?",
        "Plan: 1. SQL Retrieval Tool (tags LIKE '%TYPE%' AND price < PRICE); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (5)",
        "Plan: 1. SQL Retrieval Tool (tags LIKE '%TYPE%'); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (5)",
        "Plan: 1. ItemCF Retrieval Tool ([\"ITEM\"]); 2. Candidate Fetching Tool (5)",
    ]);
    let generator = DemoGenerator { provider: &provider, planner: &planner, registry: &registry, catalog: &catalog, parallelism: 1 };
    let target = parse_plan(
        "1. SQL Retrieval Tool (tags LIKE '%TYPE%'); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (5)",
    )
    .unwrap();
    let records = generator.generate_output_first(&target, 3).unwrap();
    for r in &records {
        let verdict = if r.accepted { "kept".to_string() } else { format!("dropped ({})", r.reject_reason.as_deref().unwrap_or("")) };
        println!("{verdict:<22} {}", r.intent);
    }

    let mut store = (*demos).clone();
    let added = extend_store(&mut store, &records, &HashEmbedder).unwrap();
    println!("store: {} -> {} demos (+{added})", demos.len(), store.len());
}
