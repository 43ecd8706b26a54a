//! One agent turn against scripted replies: a rejected first plan, then a
//! second one that the critic accepts.

use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::llm::ScriptedProvider;
use recagent::planner::{DemoStore, HashEmbedder};
use recagent::recmodels::SimilarityModel;
use recagent::turn::{Agent, AgentConfig};

fn main() {
    let catalog = games_toy();
    let model = SimilarityModel::build(&catalog.split().train, catalog.len());
    let actor = Arc::new(ScriptedProvider::sequence([
        "Action: Tool Executor\nAction Input: 1. SQL Retrieval Tool (tags LIKE '%Shooter%' AND price < 1); 2. Candidate Fetching Tool (3)",
        "Final Answer: Fortnite and Warframe are both free.",
        "Action: Tool Executor\nAction Input: 1. SQL Retrieval Tool (tags LIKE '%Shooter%'); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (3)",
        "Final Answer: Here are three popular shooters.",
    ]));
    let critic = Arc::new(ScriptedProvider::sequence([
        "No. The response/tool using is not good because the user never asked for free games. Drop the price condition.",
        "Yes",
    ]));
    let agent = Agent::new(
        Arc::new(catalog),
        Arc::new(model),
        Arc::new(DemoStore::seed(&HashEmbedder).unwrap()),
        actor,
        AgentConfig::default(),
    )
    .with_critic(critic);

    let mut session = agent.new_session();
    let turn = agent.run_turn(&mut session, "Any good shooters?").unwrap();
    for (i, a) in turn.attempts.iter().enumerate() {
        let plan = a.plan.as_ref().map(|p| p.render()).unwrap_or_default();
        println!("attempt {}: {plan}", i + 1);
        println!("  observation: {}", a.observation.as_deref().unwrap_or("").replace('\n', " | "));
        println!("  judgment: {:?} {}", a.judgment.verdict, a.judgment.feedback);
    }
    println!("reply: {}", turn.response);
    println!("calls: actor {} critic {}", turn.actor_calls, turn.critic_calls);
}
