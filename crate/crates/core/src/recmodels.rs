//! In-domain models behind the soft retrieval and ranking tools: item-based
//! collaborative filtering and the schema-driven candidate ranker.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Interaction, ItemId};

const CACHE_FORMAT: &str = "itemcf-v1";

#[derive(Debug, thiserror::Error)]
pub enum RecModelError {
    #[error("at least one seed item is required")]
    EmptySeeds,
    #[error("model cache: {0}")]
    Cache(String),
    #[error("model cache was built for {found} items, catalog has {expected}")]
    ItemCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Item-item cosine similarity over binary user incidence vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    /// Sorted, deduplicated dense user indexes per item.
    item_users: Vec<Vec<u32>>,
    norms: Vec<f64>,
}

impl SimilarityModel {
    /// Builds the incidence matrix from `train`. Repeated (user, item) pairs
    /// count once; interactions naming items `>= item_count` are ignored.
    pub fn build(train: &[Interaction], item_count: usize) -> Self {
        let mut user_index: HashMap<i64, u32> = HashMap::new();
        let mut item_users = vec![Vec::new(); item_count];
        for it in train {
            let Some(users) = item_users.get_mut(it.item_id.index()) else {
                tracing::warn!(item = it.item_id.0, item_count, "interaction outside item range ignored");
                continue;
            };
            let next = user_index.len() as u32;
            let user = *user_index.entry(it.user_id).or_insert(next);
            users.push(user);
        }
        for users in &mut item_users {
            users.sort_unstable();
            users.dedup();
        }
        let norms = item_users.iter().map(|u| (u.len() as f64).sqrt()).collect();
        SimilarityModel { item_users, norms }
    }

    pub fn item_count(&self) -> usize {
        self.item_users.len()
    }

    pub fn norm(&self, item: ItemId) -> f64 {
        self.norms.get(item.index()).copied().unwrap_or(0.0)
    }

    /// `|users(a) ∩ users(b)| / sqrt(|users(a)| · |users(b)|)`; zero when
    /// either item has no interactions or is out of range.
    pub fn similarity(&self, a: ItemId, b: ItemId) -> f64 {
        let (Some(ua), Some(ub)) = (self.item_users.get(a.index()), self.item_users.get(b.index())) else {
            return 0.0;
        };
        if ua.is_empty() || ub.is_empty() {
            return 0.0;
        }
        if a == b {
            return 1.0;
        }
        let common = intersection_size(ua, ub);
        common as f64 / (self.norms[a.index()] * self.norms[b.index()])
    }

    /// Mean similarity of each candidate to the seeds.
    pub fn score_by_seeds(&self, seeds: &[ItemId], candidates: &[ItemId]) -> Result<Vec<f64>, RecModelError> {
        if seeds.is_empty() {
            return Err(RecModelError::EmptySeeds);
        }
        let n = seeds.len() as f64;
        Ok(candidates
            .iter()
            .map(|&c| seeds.iter().map(|&s| self.similarity(s, c)).sum::<f64>() / n)
            .collect())
    }

    /// Writes the line-JSON cache: a header line, then one line per item.
    pub fn save_cache(&self, mut out: impl Write) -> Result<(), RecModelError> {
        let header = CacheHeader { format: CACHE_FORMAT.to_string(), item_count: self.item_count() };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for (item, users) in self.item_users.iter().enumerate() {
            let line = CacheLine { item: item as u32, users: users.clone(), norm: self.norms[item] };
            writeln!(out, "{}", serde_json::to_string(&line).expect("line serializes"))?;
        }
        Ok(())
    }

    /// Loads a cache written by [`save_cache`](Self::save_cache), checking it
    /// was built for `expected_items` items.
    pub fn load_cache(input: impl BufRead, expected_items: usize) -> Result<Self, RecModelError> {
        let mut lines = input.lines();
        let header_line = lines.next().ok_or_else(|| RecModelError::Cache("empty file".into()))??;
        let header: CacheHeader =
            serde_json::from_str(&header_line).map_err(|e| RecModelError::Cache(format!("header: {e}")))?;
        if header.format != CACHE_FORMAT {
            return Err(RecModelError::Cache(format!("unsupported format {:?}", header.format)));
        }
        if header.item_count != expected_items {
            return Err(RecModelError::ItemCountMismatch { expected: expected_items, found: header.item_count });
        }
        let mut item_users = vec![Vec::new(); expected_items];
        let mut norms = vec![0.0; expected_items];
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheLine = serde_json::from_str(&line)
                .map_err(|e| RecModelError::Cache(format!("line {}: {e}", n + 2)))?;
            let idx = rec.item as usize;
            if idx >= expected_items {
                return Err(RecModelError::Cache(format!("line {}: item {} out of range", n + 2, rec.item)));
            }
            item_users[idx] = rec.users;
            norms[idx] = rec.norm;
        }
        Ok(SimilarityModel { item_users, norms })
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    item_count: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    item: u32,
    users: Vec<u32>,
    norm: f64,
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSchema {
    Popularity,
    Similarity,
    Preference,
}

impl RankSchema {
    pub fn as_str(self) -> &'static str {
        match self {
            RankSchema::Popularity => "popularity",
            RankSchema::Similarity => "similarity",
            RankSchema::Preference => "preference",
        }
    }
}

impl fmt::Display for RankSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankSchema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "popularity" => Ok(RankSchema::Popularity),
            "similarity" => Ok(RankSchema::Similarity),
            "preference" => Ok(RankSchema::Preference),
            other => Err(format!(
                "unknown ranking schema {other:?}; expected \"popularity\", \"similarity\" or \"preference\""
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRequest {
    pub schema: RankSchema,
    pub prefer: Vec<String>,
    pub unwanted: Vec<String>,
}

/// Result of a ranking pass, including what the ranker could not honor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankOutcome {
    pub order: Vec<ItemId>,
    pub schema_used: Option<RankSchema>,
    pub removed: usize,
    /// Prefer/unwanted titles that did not match any catalog item.
    pub unresolved: Vec<String>,
    pub warnings: Vec<String>,
}

/// Ranking contract used by the ranking tool. `similarity_seeds` are the
/// seeds of the most recent soft-retrieval step, if any.
pub trait Ranker: Send + Sync {
    fn rank(
        &self,
        req: &RankRequest,
        candidates: &[ItemId],
        similarity_seeds: &[ItemId],
        catalog: &Catalog,
    ) -> RankOutcome;
}

/// Reference ranker backed by ItemCF similarity and popularity.
#[derive(Debug, Clone)]
pub struct ItemCfRanker {
    model: std::sync::Arc<SimilarityModel>,
}

impl ItemCfRanker {
    pub fn new(model: std::sync::Arc<SimilarityModel>) -> Self {
        ItemCfRanker { model }
    }
}

impl Ranker for ItemCfRanker {
    fn rank(
        &self,
        req: &RankRequest,
        candidates: &[ItemId],
        similarity_seeds: &[ItemId],
        catalog: &Catalog,
    ) -> RankOutcome {
        rank_candidates(req, candidates, similarity_seeds, &self.model, catalog)
    }
}

/// Removes unwanted titles, then sorts descending by the schema's key with
/// ties broken by ascending item id.
///
/// Unresolvable titles are reported, not fatal. A `preference` request with
/// no resolvable `prefer` titles, or a `similarity` request without seeds,
/// falls back to popularity with a warning.
pub fn rank_candidates(
    req: &RankRequest,
    candidates: &[ItemId],
    similarity_seeds: &[ItemId],
    model: &SimilarityModel,
    catalog: &Catalog,
) -> RankOutcome {
    let mut outcome = RankOutcome::default();
    let mut unwanted = Vec::new();
    for title in &req.unwanted {
        match catalog.resolve_title(title) {
            Some(id) => unwanted.push(id),
            None => outcome.unresolved.push(title.clone()),
        }
    }
    let mut prefer = Vec::new();
    for title in &req.prefer {
        match catalog.resolve_title(title) {
            Some(id) => {
                if !prefer.contains(&id) {
                    prefer.push(id);
                }
            }
            None => outcome.unresolved.push(title.clone()),
        }
    }

    let kept: Vec<ItemId> = candidates.iter().copied().filter(|c| !unwanted.contains(c)).collect();
    outcome.removed = candidates.len() - kept.len();

    let mut schema = req.schema;
    if schema == RankSchema::Preference && prefer.is_empty() {
        outcome
            .warnings
            .push("no resolvable 'prefer' items; ranked by popularity instead".to_string());
        schema = RankSchema::Popularity;
    }
    if schema == RankSchema::Similarity && similarity_seeds.is_empty() {
        outcome
            .warnings
            .push("no similarity seeds from a previous ItemCF step; ranked by popularity instead".to_string());
        schema = RankSchema::Popularity;
    }

    let keys: Vec<f64> = match schema {
        RankSchema::Popularity => kept.iter().map(|&c| catalog.popularity(c) as f64).collect(),
        RankSchema::Similarity => model.score_by_seeds(similarity_seeds, &kept).expect("seeds non-empty"),
        RankSchema::Preference => model.score_by_seeds(&prefer, &kept).expect("prefer non-empty"),
    };
    let mut scored: Vec<(ItemId, f64)> = kept.into_iter().zip(keys).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    outcome.order = scored.into_iter().map(|(id, _)| id).collect();
    outcome.schema_used = Some(schema);
    outcome
}
