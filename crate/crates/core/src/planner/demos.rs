use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Plan, PlanStep};

pub const EMBED_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Request(String),
    #[error("embedding has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Hashed bag-of-tokens: lowercase, split on non-alphanumerics, FNV-1a each
/// token into one of 512 buckets, L2-normalize.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn hash_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    let lower = text.to_lowercase();
    for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        v[(fnv1a(tok.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
    }
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        Ok(hash_embed(text))
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Sentence embeddings from an `/embeddings` endpoint, truncated or
/// rejected to match [`EMBED_DIM`] when `dim` is set.
pub struct HttpEmbedder {
    url: String,
    model: String,
    api_key: String,
    dim: Option<usize>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: String, dim: Option<usize>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEmbedder {
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            dim,
            agent,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = serde_json::json!({"model": self.model, "input": text}).to_string();
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| EmbedError::Request(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| EmbedError::Request(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EmbedError::Request(format!("status {status}: {text}")));
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| EmbedError::Request(e.to_string()))?;
        let mut v: Vec<f64> = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbedError::Request("missing data[0].embedding".into()))?
            .iter()
            .filter_map(serde_json::Value::as_f64)
            .collect();
        if let Some(dim) = self.dim {
            if v.len() != dim {
                return Err(EmbedError::Dimension { expected: dim, found: v.len() });
            }
        }
        normalize(&mut v);
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoStep {
    pub tool: String,
    pub input: String,
}

/// On-disk demonstration line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub intent: String,
    pub plan: Vec<DemoStep>,
}

impl DemoRecord {
    pub fn to_plan(&self) -> Plan {
        Plan {
            steps: self
                .plan
                .iter()
                .map(|s| PlanStep { tool_name: s.tool.clone(), tool_input: s.input.clone() })
                .collect(),
        }
    }

    pub fn from_plan(intent: &str, plan: &Plan) -> Self {
        DemoRecord {
            intent: intent.to_string(),
            plan: plan
                .steps
                .iter()
                .map(|s| DemoStep { tool: s.tool_name.clone(), input: s.tool_input.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    /// Position in the store; stable because the store is append-only.
    pub id: usize,
    pub intent: String,
    pub plan: Plan,
    pub embedding: Vec<f64>,
}

impl Demonstration {
    /// `Request: ...` / `Plan: ...` block used in prompts.
    pub fn render(&self) -> String {
        format!("Request: {}\nPlan: {}", self.intent, self.plan.render())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DemoStoreError {
    #[error("demo line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const SEED_DEMOS: &str = include_str!("../../data/seed_demos.jsonl");

/// Append-only demonstration store with cosine nearest-neighbor lookup.
#[derive(Debug, Clone, Default)]
pub struct DemoStore {
    demos: Vec<Demonstration>,
}

impl DemoStore {
    pub fn new() -> Self {
        DemoStore::default()
    }

    /// The bundled hand-written seed demonstrations.
    pub fn seed(embedder: &dyn Embedder) -> Result<Self, DemoStoreError> {
        Self::from_jsonl(SEED_DEMOS.as_bytes(), embedder)
    }

    pub fn seed_records() -> Vec<DemoRecord> {
        SEED_DEMOS.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).expect("seed demos parse")).collect()
    }

    pub fn from_jsonl(input: impl BufRead, embedder: &dyn Embedder) -> Result<Self, DemoStoreError> {
        let mut store = DemoStore::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DemoRecord = serde_json::from_str(&line)
                .map_err(|e| DemoStoreError::Parse { line: n + 1, message: e.to_string() })?;
            store.push(&rec.intent, rec.to_plan(), embedder)?;
        }
        Ok(store)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for d in &self.demos {
            let line = serde_json::to_string(&DemoRecord::from_plan(&d.intent, &d.plan)).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn push(&mut self, intent: &str, plan: Plan, embedder: &dyn Embedder) -> Result<usize, EmbedError> {
        let embedding = embedder.embed(intent)?;
        let id = self.demos.len();
        self.demos.push(Demonstration { id, intent: intent.to_string(), plan, embedding });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    /// Top `k` by cosine to `query`, ties by ascending id, with scores.
    pub fn retrieve_scored(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<(&Demonstration, f64)>, EmbedError> {
        let q = embedder.embed(query)?;
        let mut scored: Vec<(&Demonstration, f64)> = self.demos.iter().map(|d| (d, cosine(&q, &d.embedding))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn retrieve(&self, query: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<&Demonstration>, EmbedError> {
        Ok(self.retrieve_scored(query, k, embedder)?.into_iter().map(|(d, _)| d).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan1() -> Plan {
        Plan { steps: vec![PlanStep { tool_name: "Query Tool".into(), tool_input: "SELECT 1".into() }] }
    }

    #[test]
    fn hash_embedding_properties() {
        assert_eq!(hash_embed("abc"), hash_embed("ABC"));
        let e = hash_embed("cheap rpg");
        assert!((cosine(&e, &e) - 1.0).abs() < 1e-12);
        assert!((cosine(&hash_embed("rpg games cheap"), &hash_embed("cheap rpg games")) - 1.0).abs() < 1e-12);
        assert!(hash_embed("").iter().all(|x| *x == 0.0));
        assert_eq!(hash_embed("x").len(), EMBED_DIM);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn retrieval_min_and_exact_match() {
        let mut store = DemoStore::new();
        store.push("cheap rpg games", plan1(), &HashEmbedder).unwrap();
        store.push("games like portal", plan1(), &HashEmbedder).unwrap();
        assert_eq!(store.retrieve("anything", 3, &HashEmbedder).unwrap().len(), 2);
        assert_eq!(store.retrieve("games like portal", 3, &HashEmbedder).unwrap()[0].id, 1);
    }

    #[test]
    fn ties_break_by_id() {
        let mut store = DemoStore::new();
        for _ in 0..3 {
            store.push("same text", plan1(), &HashEmbedder).unwrap();
        }
        let ids: Vec<usize> = store.retrieve("same text", 3, &HashEmbedder).unwrap().iter().map(|d| d.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn seed_store_loads_and_round_trips() {
        let store = DemoStore::seed(&HashEmbedder).unwrap();
        assert_eq!(store.len(), 20);
        let mut buf = Vec::new();
        store.write_jsonl(&mut buf).unwrap();
        let again = DemoStore::from_jsonl(buf.as_slice(), &HashEmbedder).unwrap();
        assert_eq!(again.demos(), store.demos());
    }

    const WORDS: &[&str] = &["rpg", "cheap", "games", "like", "portal", "shooter", "free", "new", "old", "puzzle"];

    fn arb_sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(WORDS), 1..6).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn retrieval_matches_brute_force(intents in prop::collection::vec(arb_sentence(), 1..12), q in arb_sentence(), k in 1usize..6) {
            let mut store = DemoStore::new();
            for i in &intents {
                store.push(i, plan1(), &HashEmbedder).unwrap();
            }
            let got = store.retrieve_scored(&q, k, &HashEmbedder).unwrap();
            prop_assert_eq!(got.len(), k.min(intents.len()));
            prop_assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
            // oracle: bag-of-words counts compared directly, independent of the hashing
            let counts = |s: &str| {
                let mut m = std::collections::BTreeMap::new();
                for t in s.split(' ') { *m.entry(t.to_string()).or_insert(0.0) += 1.0; }
                m
            };
            let qc = counts(&q);
            let oracle_cos = |s: &str| {
                let c = counts(s);
                let dot: f64 = qc.iter().map(|(t, v)| v * c.get(t).copied().unwrap_or(0.0)).sum();
                let n = |m: &std::collections::BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
                dot / (n(&qc) * n(&c))
            };
            let hashes: std::collections::BTreeSet<u64> = WORDS.iter().map(|w| fnv1a(w.as_bytes()) % EMBED_DIM as u64).collect();
            if hashes.len() == WORDS.len() {
                for (d, score) in &got {
                    prop_assert!((score - oracle_cos(&d.intent)).abs() < 1e-9);
                }
            }
        }
    }
}
