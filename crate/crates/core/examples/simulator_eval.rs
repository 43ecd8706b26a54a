//! Scripted user-simulator sessions scored with Hit@5 and AT@5.
//!
//! The simulated user names one tag of its hidden target; the agent filters
//! by that tag, ranks by popularity and shows one more item every turn.

use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::eval::{eval_targets, run_simulator, EvalReport, Setting};
use recagent::llm::{ChatMessage, FnProvider, ProviderError};
use recagent::memory::render_turns;
use recagent::planner::{DemoStore, HashEmbedder};
use recagent::recmodels::SimilarityModel;
use recagent::turn::{Agent, AgentConfig};

fn last_prompt(m: &[ChatMessage]) -> &str {
    m.last().map(|m| m.content.as_str()).unwrap_or("")
}

fn main() {
    let catalog = games_toy();
    let model = SimilarityModel::build(&catalog.split().train, catalog.len());

    let simulator = FnProvider(|m: &[ChatMessage]| -> Result<String, ProviderError> {
        let prompt = last_prompt(m);
        let tag = prompt
            .split("tags: ")
            .nth(1)
            .and_then(|s| s.split([',', ';']).next())
            .unwrap_or("fun")
            .trim();
        Ok(format!("Looking for something tagged {tag}."))
    });
    let actor = FnProvider(|m: &[ChatMessage]| -> Result<String, ProviderError> {
        let prompt = last_prompt(m);
        // the response call ends with the executed plan's observation
        if let (true, Some(i)) = (prompt.trim_end().ends_with("Thought:"), prompt.rfind("\nObservation: ")) {
            let obs = &prompt[i + "\nObservation: ".len()..];
            return Ok(format!("Final Answer: {}", obs.split("\n\n").next().unwrap_or("")));
        }
        let tag = prompt.rsplit("tagged ").next().and_then(|s| s.split('.').next()).unwrap_or("");
        let shown = prompt.matches("Looking for something tagged").count().max(1);
        Ok(format!(
            "Action: Tool Executor\nAction Input: 1. SQL Retrieval Tool (tags LIKE '%{tag}%'); \
             2. Ranking Tool ({{\"schema\":\"popularity\"}}); 3. Candidate Fetching Tool ({shown})"
        ))
    });
    let critic = FnProvider(|_: &[ChatMessage]| Ok::<_, ProviderError>("Yes".to_string()));

    let agent = Agent::new(
        Arc::new(catalog),
        Arc::new(model),
        Arc::new(DemoStore::seed(&HashEmbedder).unwrap()),
        Arc::new(actor),
        AgentConfig::default(),
    )
    .with_critic(Arc::new(critic));
    let targets = eval_targets(&agent.catalog);
    let sessions = run_simulator(&agent, &simulator, &targets, 5, Setting::SessionWise, 1);
    for s in &sessions {
        println!("user {:>2} target {:<24} hit {:<5} turns {}", s.user_id, s.target_title, s.hit, s.turns_used);
    }
    println!("\nfirst session:\n{}", render_turns(&sessions[0].transcript));
    let report = EvalReport::from_sessions("tag-filter agent", sessions, 5, serde_json::json!({"setting": "session"})).unwrap();
    print!("\n{}", report.render_table());
}
