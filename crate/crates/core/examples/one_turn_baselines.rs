//! Random and popularity baselines for one-turn retrieval and ranking.

use recagent::catalog::games_toy;
use recagent::eval::{baseline, BaselineMode, Task};

fn main() {
    let catalog = games_toy();
    for task in [Task::Retrieval, Task::Ranking] {
        let k = if task == Task::Ranking { 20 } else { 5 };
        for mode in [BaselineMode::Random, BaselineMode::Popularity] {
            let report = baseline(mode, task, &catalog, k, 10_000, 7).unwrap();
            let (name, value) = report.metrics.iter().next().unwrap();
            println!("{:<10} {:<10} {name:<10} {value:.4}", format!("{mode:?}"), format!("{task:?}"));
        }
    }
    // a uniformly placed target among 20 candidates
    let closed_form = (1..=20).map(|r| 1.0 / ((r + 1) as f64).log2()).sum::<f64>() / 20.0;
    println!("expected random ndcg@20: {closed_form:.4}");
}
