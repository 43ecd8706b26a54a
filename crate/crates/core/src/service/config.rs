use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{games_toy, ingest_catalog, Catalog, IngestError};
use crate::llm::{ChatProvider, HttpConfig, HttpProvider, ProviderError, ScriptedProvider, API_KEY_ENV};
use crate::planner::{DemoStore, DemoStoreError, Embedder, HashEmbedder, HttpEmbedder};
use crate::recmodels::{RecModelError, SimilarityModel};
use crate::turn::{Agent, AgentConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// Replays a line-JSON `{match, reply}` script.
    Scripted { script: PathBuf },
    /// Chat-completions endpoint; the key comes from the environment.
    Http(HttpConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Http(HttpConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSizes {
    pub simulator_sessions: usize,
    pub one_turn_retrieval: usize,
    pub one_turn_ranking: usize,
}

impl Default for EvalSizes {
    fn default() -> Self {
        EvalSizes { simulator_sessions: 50, one_turn_retrieval: 50, one_turn_ranking: 10 }
    }
}

/// JSON configuration shared by the service and the CLI.
///
/// Without `items_path` the bundled toy game catalog is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub items_path: Option<PathBuf>,
    pub interactions_path: Option<PathBuf>,
    pub model_cache: Option<PathBuf>,
    pub demo_store: Option<PathBuf>,
    pub provider: ProviderConfig,
    /// Critic backend; the actor's provider when absent.
    pub critic_provider: Option<ProviderConfig>,
    pub embedding: Option<EmbeddingConfig>,
    pub item: String,
    pub char_budget: usize,
    pub max_rechains: usize,
    pub eval: EvalSizes,
    pub listen: String,
    /// Directory for per-session line-JSON logs.
    pub session_log_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let agent = AgentConfig::default();
        ServiceConfig {
            items_path: None,
            interactions_path: None,
            model_cache: None,
            demo_store: None,
            provider: ProviderConfig::default(),
            critic_provider: None,
            embedding: None,
            item: agent.item,
            char_budget: agent.char_budget,
            max_rechains: agent.max_rechains,
            eval: EvalSizes::default(),
            listen: "127.0.0.1:8080".into(),
            session_log_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("{0} does not exist")]
    MissingPath(String),
    #[error("items_path and interactions_path must be given together")]
    IncompleteCatalog,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] RecModelError),
    #[error(transparent)]
    Demos(#[from] DemoStoreError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn require(path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath(path.display().to_string()))
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::Read { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Checks that every configured path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.items_path, &self.interactions_path) {
            (Some(a), Some(b)) => {
                require(a)?;
                require(b)?;
            }
            (None, None) => {}
            _ => return Err(ConfigError::IncompleteCatalog),
        }
        for p in [&self.model_cache, &self.demo_store].into_iter().flatten() {
            require(p)?;
        }
        for pc in std::iter::once(&self.provider).chain(&self.critic_provider) {
            if let ProviderConfig::Scripted { script } = pc {
                require(script)?;
            }
        }
        Ok(())
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            item: self.item.clone(),
            max_rechains: self.max_rechains,
            char_budget: self.char_budget,
            ..AgentConfig::default()
        }
    }

    pub fn load_catalog(&self) -> Result<Catalog, ConfigError> {
        match (&self.items_path, &self.interactions_path) {
            (Some(items), Some(inter)) => Ok(ingest_catalog(items, inter)?),
            (None, None) => Ok(games_toy()),
            _ => Err(ConfigError::IncompleteCatalog),
        }
    }

    pub fn load_model(&self, catalog: &Catalog) -> Result<SimilarityModel, ConfigError> {
        match &self.model_cache {
            Some(path) => {
                let file = File::open(path).map_err(|e| ConfigError::Read {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                Ok(SimilarityModel::load_cache(BufReader::new(file), catalog.len())?)
            }
            None => Ok(SimilarityModel::build(&catalog.split().train, catalog.len())),
        }
    }

    /// The configured embedder. HTTP embeddings read the key from the
    /// environment like the chat provider.
    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        match &self.embedding {
            None => Ok(Arc::new(HashEmbedder)),
            Some(e) => {
                let key = api_key()?;
                Ok(Arc::new(HttpEmbedder::new(&e.base_url, &e.model, key, e.dim)))
            }
        }
    }

    pub fn load_demos(&self, embedder: &dyn Embedder) -> Result<DemoStore, ConfigError> {
        match &self.demo_store {
            Some(path) => {
                let file = File::open(path).map_err(|e| ConfigError::Read {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                Ok(DemoStore::from_jsonl(BufReader::new(file), embedder)?)
            }
            None => Ok(DemoStore::seed(embedder)?),
        }
    }

    /// Everything needed to run turns.
    pub fn build_agent(&self) -> Result<Agent, ConfigError> {
        self.validate()?;
        let catalog = self.load_catalog()?;
        let model = self.load_model(&catalog)?;
        let embedder = self.embedder()?;
        let demos = self.load_demos(embedder.as_ref())?;
        let actor = build_provider(&self.provider)?;
        let mut agent = Agent::with_embedder(
            Arc::new(catalog),
            Arc::new(model),
            Arc::new(demos),
            embedder,
            actor,
            self.agent_config(),
        );
        if let Some(pc) = &self.critic_provider {
            agent = agent.with_critic(build_provider(pc)?);
        }
        Ok(agent)
    }
}

fn api_key() -> Result<String, ProviderError> {
    match std::env::var(API_KEY_ENV) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(ProviderError::MissingApiKey(API_KEY_ENV)),
    }
}

pub fn build_provider(config: &ProviderConfig) -> Result<Arc<dyn ChatProvider>, ConfigError> {
    match config {
        ProviderConfig::Scripted { script } => Ok(Arc::new(ScriptedProvider::from_file(script)?)),
        ProviderConfig::Http(http) => {
            let provider = HttpProvider::from_env(http.clone())?;
            tracing::info!(base_url = %http.base_url, model = %http.model, api_key = "<redacted>", "using HTTP chat provider");
            Ok(Arc::new(provider))
        }
    }
}
