//! Command-line front end. The `recagent` binary parses [`Cli`] and calls [`run`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::demogen::{
    export_instruction_pairs, extend_store, write_records, DemoGenerator, DemogenError, Strategy, SyntheticDialogue,
};
use crate::eval::{
    baseline, eval_targets, gen_one_turn, run_one_turn_case, run_simulator, BaselineMode, EvalError, EvalReport,
    Setting, Task,
};
use crate::llm::ChatProvider;
use crate::planner::{parse_plan, DemoRecord};
use crate::service::{build_provider, ConfigError, ServeError, ServiceConfig};
use crate::turn::{Agent, TurnResult};

#[derive(Debug, Parser)]
#[command(name = "recagent", version, about = "Conversational recommender agent")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and check item and interaction CSVs.
    Ingest(IngestArgs),
    /// Build the ItemCF similarity model and write its cache.
    BuildModel(BuildModelArgs),
    /// Chat with the agent on stdin/stdout.
    Chat(ChatArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Generate planning demonstrations.
    Demogen(DemogenArgs),
    /// Run an evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write instruction/plan pairs for fine-tuning.
    ExportDataset(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub interactions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildModelArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Print each attempt's plan and judgment.
    #[arg(long)]
    pub trace: bool,
    /// Scripted reply fixture used instead of the configured provider.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Append every turn trace as line-JSON.
    #[arg(long)]
    pub save_traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug, Args)]
pub struct DemogenArgs {
    #[arg(long)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Target plan for output-first, e.g. "1. SQL Retrieval Tool (...); 2. Candidate Fetching Tool (5)".
    #[arg(long)]
    pub target: Option<String>,
    /// Seed dialogues (line-JSON) for the synthetic-dialogue strategy.
    #[arg(long)]
    pub dialogues: Option<PathBuf>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Generation records; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Writes the demonstration store extended with accepted records.
    #[arg(long)]
    pub store_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Simulated-user sessions scored by Hit@k and AT@k.
    Simulator(SimulatorArgs),
    /// One-turn retrieval or ranking scored by Recall@k or NDCG@k.
    OneTurn(OneTurnArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-session or per-case line-JSON rows.
    #[arg(long)]
    pub rows: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulatorArgs {
    #[arg(long, default_value = "session")]
    pub setting: Setting,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub max_turns: Option<usize>,
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Agent reply fixture.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Simulated-user reply fixture.
    #[arg(long)]
    pub simulator_script: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct OneTurnArgs {
    #[arg(long)]
    pub task: Task,
    /// Score a random or popularity baseline instead of the agent.
    #[arg(long)]
    pub baseline: Option<BaselineMode>,
    /// Baseline trials.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Cutoff; 5 for retrieval and 20 for ranking when absent.
    #[arg(long)]
    pub k: Option<usize>,
    /// Agent cases; the configured eval size when absent.
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Conversation-generator reply fixture.
    #[arg(long)]
    pub simulator_script: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Turn traces as line-JSON, as written by `chat --save-traces`.
    #[arg(long)]
    pub traces: Vec<PathBuf>,
    /// Synthetic dialogues as line-JSON; the bundled set with `--bundled`.
    #[arg(long)]
    pub dialogues: Option<PathBuf>,
    #[arg(long)]
    pub bundled: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error(transparent)]
    Demogen(#[from] DemogenError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io { path: "<stdout>".into(), source }
}

/// Runs `cli`, reading chat input from `input` and writing results to `out`.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&config, a, out),
        Command::BuildModel(a) => build_model(&config, a, out),
        Command::Chat(a) => chat(&config, a, input, out),
        Command::Serve(a) => serve(config, a),
        Command::Demogen(a) => demogen(&config, a, cli.seed, out),
        Command::Eval(EvalCommand::Simulator(a)) => eval_simulator(&config, a, out),
        Command::Eval(EvalCommand::OneTurn(a)) => eval_one_turn(&config, a, cli.seed, out),
        Command::ExportDataset(a) => export_dataset(&config, a, out),
    }
}

fn ingest(config: &ServiceConfig, a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = ServiceConfig {
        items_path: a.items.or_else(|| config.items_path.clone()),
        interactions_path: a.interactions.or_else(|| config.interactions_path.clone()),
        ..config.clone()
    };
    if cfg.items_path.is_none() {
        return Err(CliError::Usage("ingest needs --items and --interactions (or catalog paths in --config)".into()));
    }
    let catalog = cfg.load_catalog()?;
    let split = catalog.split();
    writeln!(
        out,
        "items: {}\ninteractions: {}\ntrain: {}  valid: {}  test: {}",
        catalog.len(),
        catalog.interactions().len(),
        split.train.len(),
        split.valid.len(),
        split.test.len()
    )
    .map_err(stdout_err)
}

fn build_model(config: &ServiceConfig, a: BuildModelArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let catalog = config.load_catalog()?;
    let model = crate::recmodels::SimilarityModel::build(&catalog.split().train, catalog.len());
    let mut w = create(&a.out)?;
    model.save_cache(&mut w).map_err(|e| CliError::Other(e.to_string()))?;
    w.flush().map_err(io_err(&a.out))?;
    writeln!(out, "wrote model for {} items to {}", catalog.len(), a.out.display()).map_err(stdout_err)
}

/// Agent built from `config`, with `script` replacing the chat provider.
fn agent_with_script(config: &ServiceConfig, script: Option<&PathBuf>) -> Result<Agent, CliError> {
    let mut cfg = config.clone();
    if let Some(s) = script {
        cfg.provider = crate::service::ProviderConfig::Scripted { script: s.clone() };
        cfg.critic_provider = None;
    }
    Ok(cfg.build_agent()?)
}

fn provider_or_script(config: &ServiceConfig, script: Option<&PathBuf>) -> Result<Arc<dyn ChatProvider>, CliError> {
    let pc = match script {
        Some(s) => crate::service::ProviderConfig::Scripted { script: s.clone() },
        None => config.provider.clone(),
    };
    Ok(build_provider(&pc)?)
}

fn write_trace(out: &mut dyn Write, t: &TurnResult) -> std::io::Result<()> {
    for (i, a) in t.attempts.iter().enumerate() {
        let plan = match (&a.plan, &a.plan_error) {
            (Some(p), _) if p.is_empty() => "(no tools)".to_string(),
            (Some(p), _) => p.render(),
            (None, Some(e)) => format!("unparsed: {}", e.reason),
            (None, None) => "(none)".to_string(),
        };
        writeln!(out, "  [attempt {}] plan: {plan}", i + 1)?;
        for v in &a.violations {
            writeln!(out, "  [attempt {}] violation: {v}", i + 1)?;
        }
        if let Some(o) = &a.observation {
            writeln!(out, "  [attempt {}] observation: {}", i + 1, o.replace('\n', " | "))?;
        }
        let j = &a.judgment;
        let verdict = serde_json::to_value(j.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        if j.feedback.is_empty() {
            writeln!(out, "  [attempt {}] judgment: {verdict}", i + 1)?;
        } else {
            writeln!(out, "  [attempt {}] judgment: {verdict}: {}", i + 1, j.feedback)?;
        }
    }
    writeln!(out, "  [calls] actor: {}  critic: {}  memory: {}", t.actor_calls, t.critic_calls, t.memory_calls)
}

fn chat(config: &ServiceConfig, a: ChatArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let agent = agent_with_script(config, a.script.as_ref())?;
    let mut session = agent.new_session();
    let mut traces = a.save_traces.as_deref().map(create).transpose()?;
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line).map_err(|source| CliError::Io { path: "<stdin>".into(), source })? == 0 {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" || text == "/exit" {
            break;
        }
        let turn = agent.run_turn(&mut session, text).map_err(|e| CliError::Other(e.to_string()))?;
        writeln!(out, "user: {text}\nassistant: {}", turn.response).map_err(stdout_err)?;
        if a.trace {
            write_trace(out, &turn).map_err(stdout_err)?;
        }
        if let (Some(w), Some(path)) = (traces.as_mut(), a.save_traces.as_deref()) {
            let json = serde_json::to_string(&turn).map_err(|e| CliError::Other(e.to_string()))?;
            writeln!(w, "{json}").map_err(io_err(path))?;
        }
    }
    if let (Some(mut w), Some(path)) = (traces, a.save_traces.as_deref()) {
        w.flush().map_err(io_err(path))?;
    }
    Ok(())
}

fn serve(mut config: ServiceConfig, a: ServeArgs) -> Result<(), CliError> {
    if let Some(l) = a.listen {
        config.listen = l;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    rt.block_on(crate::service::serve(config))?;
    Ok(())
}

fn read_demo_records(path: &Path) -> Result<Vec<DemoRecord>, CliError> {
    let mut records = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Other(format!("{} line {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(records)
}

fn demogen(config: &ServiceConfig, a: DemogenArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let agent = agent_with_script(config, a.script.as_ref())?;
    let generator = DemoGenerator {
        provider: agent.actor.as_ref(),
        planner: &agent.planner,
        registry: &agent.registry,
        catalog: &agent.catalog,
        parallelism: a.parallelism.max(1),
    };
    let records = match a.strategy {
        Strategy::InputFirst => {
            let seeds = match &config.demo_store {
                Some(p) => read_demo_records(p)?,
                None => crate::planner::DemoStore::seed_records(),
            };
            generator.generate_input_first(&seeds, a.n)?
        }
        Strategy::OutputFirst => {
            let target = a.target.as_deref().ok_or_else(|| CliError::Usage("output-first needs --target".into()))?;
            let plan = parse_plan(target).map_err(|e| CliError::Usage(format!("--target: {}", e.reason)))?;
            generator.generate_output_first(&plan, a.n)?
        }
        Strategy::SyntheticDialogue => {
            let seeds = match &a.dialogues {
                Some(p) => SyntheticDialogue::read_jsonl(open(p)?).map_err(io_err(p))?,
                None => SyntheticDialogue::seeds(),
            };
            generator.generate_synthetic(&seeds, a.n, seed)?
        }
        Strategy::AgentTrace => {
            return Err(CliError::Usage("agent traces are exported with `export-dataset --traces`".into()));
        }
    };
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            write_records(&mut w, &records).map_err(io_err(p))?;
            w.flush().map_err(io_err(p))?;
        }
        None => write_records(&mut *out, &records).map_err(stdout_err)?,
    }
    let accepted = records.iter().filter(|r| r.accepted).count();
    if let Some(p) = &a.store_out {
        let embedder = config.embedder()?;
        let mut store = config.load_demos(embedder.as_ref())?;
        extend_store(&mut store, &records, embedder.as_ref()).map_err(|e| CliError::Other(e.to_string()))?;
        let mut w = create(p)?;
        store.write_jsonl(&mut w).map_err(io_err(p))?;
        w.flush().map_err(io_err(p))?;
    }
    if a.out.is_some() {
        writeln!(out, "generated {} records, {accepted} accepted", records.len()).map_err(stdout_err)?;
    }
    Ok(())
}

fn write_report(report: &EvalReport, args: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    write!(out, "{}", report.render_table()).map_err(stdout_err)?;
    if let Some(p) = &args.out {
        std::fs::write(p, report.to_json()).map_err(io_err(p))?;
    }
    if let Some(p) = &args.rows {
        let mut w = create(p)?;
        report.write_rows(&mut w).map_err(io_err(p))?;
        w.flush().map_err(io_err(p))?;
    }
    Ok(())
}

fn eval_simulator(config: &ServiceConfig, a: SimulatorArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let agent = agent_with_script(config, a.script.as_ref())?;
    let simulator = provider_or_script(config, a.simulator_script.as_ref())?;
    let n = a.sessions.unwrap_or(config.eval.simulator_sessions);
    let targets: Vec<_> = eval_targets(&agent.catalog).into_iter().take(n).collect();
    let max_turns = a.max_turns.unwrap_or_else(|| a.setting.default_max_turns());
    let sessions = run_simulator(&agent, simulator.as_ref(), &targets, max_turns, a.setting, a.parallelism.max(1));
    for s in sessions.iter().filter(|s| s.error.is_some()) {
        tracing::warn!(user = s.user_id, error = s.error.as_deref().unwrap_or(""), "session ended early");
    }
    let cfg = serde_json::json!({"setting": a.setting, "k": a.k, "max_turns": max_turns, "sessions": targets.len()});
    let report = EvalReport::from_sessions("simulator", sessions, a.k, cfg)?;
    write_report(&report, &a.report, out)
}

fn eval_one_turn(config: &ServiceConfig, a: OneTurnArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let k = a.k.unwrap_or(match a.task {
        Task::Retrieval => 5,
        Task::Ranking => 20,
    });
    if let Some(mode) = a.baseline {
        let catalog = config.load_catalog()?;
        let report = baseline(mode, a.task, &catalog, k, a.trials, seed)?;
        return write_report(&report, &a.report, out);
    }
    let agent = agent_with_script(config, a.script.as_ref())?;
    let generator = provider_or_script(config, a.simulator_script.as_ref())?;
    let n = a.cases.unwrap_or(match a.task {
        Task::Retrieval => config.eval.one_turn_retrieval,
        Task::Ranking => config.eval.one_turn_ranking,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for target in eval_targets(&agent.catalog).into_iter().take(n) {
        let case = gen_one_turn(generator.as_ref(), &agent.catalog, &agent.config.item, &target, a.task, k, &mut rng)
            .map_err(EvalError::Provider)?;
        rows.push(run_one_turn_case(&agent, &case, k)?);
    }
    if rows.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let cfg = serde_json::json!({"task": a.task, "k": k, "cases": rows.len(), "seed": seed});
    let report = EvalReport::from_rows("one-turn agent", a.task, k, rows, cfg);
    write_report(&report, &a.report, out)
}

fn export_dataset(config: &ServiceConfig, a: ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut traces = Vec::new();
    for p in &a.traces {
        for (n, line) in open(p)?.lines().enumerate() {
            let line = line.map_err(io_err(p))?;
            if line.trim().is_empty() {
                continue;
            }
            let t: TurnResult = serde_json::from_str(&line)
                .map_err(|e| CliError::Other(format!("{} line {}: {e}", p.display(), n + 1)))?;
            traces.push(t);
        }
    }
    let synthetic = match (&a.dialogues, a.bundled) {
        (Some(p), _) => SyntheticDialogue::read_jsonl(open(p)?).map_err(io_err(p))?,
        (None, true) => SyntheticDialogue::seeds(),
        (None, false) => Vec::new(),
    };
    let catalog = config.load_catalog()?;
    let embedder = config.embedder()?;
    let demos = Arc::new(config.load_demos(embedder.as_ref())?);
    let registry = crate::toolkit::ToolRegistry::standard();
    let mut planner = crate::planner::Planner::new(registry.prompt_context(&config.item, &catalog), demos, embedder);
    planner.demo_count = config.agent_config().demo_count;
    let report = export_instruction_pairs(&traces, &synthetic, &planner).map_err(|e| CliError::Other(e.to_string()))?;
    let mut w = create(&a.out)?;
    report.write_jsonl(&mut w).map_err(io_err(&a.out))?;
    w.flush().map_err(io_err(&a.out))?;
    writeln!(
        out,
        "pairs: {}  from traces: {}  from synthetic: {}  skipped: {}",
        report.pairs.len(),
        report.from_traces,
        report.from_synthetic,
        report.skipped
    )
    .map_err(stdout_err)
}
