//! ItemCF similarity and the three ranking schemas over one candidate set.

use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::recmodels::{ItemCfRanker, RankRequest, RankSchema, Ranker, SimilarityModel};

fn main() {
    let catalog = games_toy();
    let model = Arc::new(SimilarityModel::build(&catalog.split().train, catalog.len()));
    let portal = catalog.resolve_title("Portal 2").expect("bundled title");

    let mut neighbours: Vec<_> = catalog
        .all_ids()
        .into_iter()
        .filter(|&id| id != portal)
        .map(|id| (model.similarity(portal, id), catalog.title(id)))
        .collect();
    neighbours.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("closest to Portal 2:");
    for (s, title) in neighbours.iter().take(5) {
        println!("  {s:.3}  {title}");
    }

    let ranker = ItemCfRanker::new(model);
    let candidates = catalog.all_ids();
    for schema in [RankSchema::Popularity, RankSchema::Similarity, RankSchema::Preference] {
        let req = RankRequest { schema, prefer: vec!["The Witness".into()], unwanted: vec!["Fortnite".into()] };
        let out = ranker.rank(&req, &candidates, &[portal], &catalog);
        let top: Vec<&str> = out.order.iter().take(3).map(|&id| catalog.title(id)).collect();
        println!("{schema:<10} removed {} -> {}", out.removed, top.join(", "));
    }
}
