//! The two plan grammars, and what validation rejects.

use recagent::planner::{parse_plan, validate_plan};
use recagent::toolkit::ToolRegistry;

fn main() {
    let registry = ToolRegistry::standard();
    let inputs = [
        "Plan: 1. SQL Retrieval Tool (tags LIKE '%Puzzle%' AND price < 30); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (3)",
        r#"[{"tool": "Candidates Storing Tool", "input": "Portal 2; Celeste"}, {"tool": "Ranking Tool", "input": "{\"schema\":\"popularity\"}"}, {"tool": "Candidate Fetching Tool", "input": "2"}]"#,
        "1. Ranking Tool (); 2. Candidates Storing Tool (Portal 2)",
        "1. Web Search Tool (cheap games)",
        "just recommend something",
    ];
    for text in inputs {
        println!("> {text}");
        match parse_plan(text) {
            Ok(plan) => {
                println!("  {}", plan.render());
                for v in validate_plan(&plan, &registry) {
                    println!("  violation: {v}");
                }
            }
            Err(e) => println!("  parse error: {}", e.reason),
        }
    }
}
