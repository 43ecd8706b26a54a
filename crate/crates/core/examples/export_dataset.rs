//! Instruction/plan pairs from the bundled synthetic dialogues.

use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::demogen::{export_instruction_pairs, SyntheticDialogue};
use recagent::planner::{DemoStore, HashEmbedder, Planner};
use recagent::toolkit::ToolRegistry;

fn main() {
    let catalog = games_toy();
    let registry = ToolRegistry::standard();
    let planner = Planner::new(
        registry.prompt_context("game", &catalog),
        Arc::new(DemoStore::seed(&HashEmbedder).unwrap()),
        Arc::new(HashEmbedder),
    );
    let dialogues = SyntheticDialogue::seeds();
    let report = export_instruction_pairs(&[], &dialogues, &planner).unwrap();
    println!("{} pairs from {} dialogues", report.pairs.len(), dialogues.len());

    let first = &report.pairs[0];
    let tail: String = first.instruction.chars().rev().take(400).collect::<Vec<_>>().into_iter().rev().collect();
    println!("\n...{tail}\n\noutput: {}", first.output);

    let mut out = Vec::new();
    report.write_jsonl(&mut out).unwrap();
    println!("\n{} bytes of line-JSON", out.len());
}
