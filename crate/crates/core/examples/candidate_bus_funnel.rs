//! Runs a plan against the candidate bus and prints the tracker.

use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::memory::{CandidateBus, UserProfile};
use recagent::planner::{execute_plan, final_observation, parse_plan};
use recagent::recmodels::{ItemCfRanker, SimilarityModel};
use recagent::toolkit::{ToolContext, ToolLimits, ToolRegistry};

fn main() {
    let catalog = games_toy();
    let model = SimilarityModel::build(&catalog.split().train, catalog.len());
    let ranker = ItemCfRanker::new(Arc::new(model.clone()));
    let profile = UserProfile::default();
    let registry = ToolRegistry::standard();
    let ctx = ToolContext { catalog: &catalog, model: &model, ranker: &ranker, profile: &profile, limits: ToolLimits::default() };

    let plan = parse_plan(
        "1. SQL Retrieval Tool (price < 40); \
         2. ItemCF Retrieval Tool ([\"The Elder Scrolls V: Skyrim\"]); \
         3. Ranking Tool ({\"schema\":\"similarity\"}); \
         4. Candidate Fetching Tool (3)",
    )
    .expect("plan parses");

    let mut bus = CandidateBus::new(&catalog);
    let records = execute_plan(&plan, &mut bus, &registry, &ctx);
    println!("{}\n", bus.render_tracker());
    println!("observation:\n{}", final_observation(&records));
}
