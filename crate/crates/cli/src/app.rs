use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dermrl_core::corpus::{
    render_sft, synthesize, DiagnosticCase, DifferentialOptions, KindMix, MockGenerator, Skipped, TextGenerator,
};
use dermrl_core::eval::{evaluate, index_items, EvalReport, PredictionRecord, Weighting};
use dermrl_core::grpo::{SimConfig, Simulator};
use dermrl_core::jsonl;
use dermrl_core::mcq::{
    build_ddx_variant, build_hierarchical_variant, build_lesion_condition, build_mcq, ItemSource, McqConfig, McqItem,
    PromptStyle,
};
use dermrl_core::reward::{total_reward_with, ParseMode, RewardBreakdown};
use dermrl_core::taxonomy::{load_ddx, load_taxonomy, DdxGraph, TaxonomyTree, FORMAT_VERSION};

use crate::config::ToolConfig;
use crate::remote::RemoteGenerator;
use crate::service::{self, AppState};

/// Errors split by exit status: usage problems exit 1, data problems 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<dermrl_core::Error> for CliError {
    fn from(e: dermrl_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "dermrl", version, about = "Hierarchical reward, trajectory synthesis and evaluation tools")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log filter (e.g. `info`, `debug`, `dermrl_cli=trace`).
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load a taxonomy (and DDx graph) and report counts and warnings.
    Validate(ValidateArgs),
    /// Synthesize Type-1/2/3 trajectories and SFT records from cases.
    Synthesize(SynthesizeArgs),
    /// Build standard or lesion-condition multiple-choice items.
    BuildMcq(BuildMcqArgs),
    /// Derive hierarchical or DDx variants from existing items.
    BuildTargeted(BuildTargetedArgs),
    /// Score completions against items.
    Score(ScoreArgs),
    /// Accuracy, invalid rate and macro-F1 per dataset.
    Evaluate(EvaluateArgs),
    /// Run the GRPO bandit simulator.
    Simulate(SimulateArgs),
    /// Run the HTTP reward service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub ddx: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OutArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Optional case file whose diagnoses must resolve.
    #[arg(long)]
    pub cases: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GeneratorKind {
    Mock,
    Remote,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long)]
    pub cases: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
    /// Also write rendered SFT records here.
    #[arg(long)]
    pub sft_out: Option<PathBuf>,
    #[arg(long)]
    pub skipped_out: Option<PathBuf>,
    /// Type-1:Type-2:Type-3 proportions.
    #[arg(long, default_value = "1:1:1")]
    pub mix: String,
    /// Defaults to `remote` when the config names an endpoint.
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorKind>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Style {
    Rl,
    Eval,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ItemKind {
    Standard,
    LesionCondition,
}

#[derive(Args, Debug)]
pub struct BuildMcqArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// JSONL with `id`, `image_ref` and `diagnosis` per line.
    #[arg(long)]
    pub sources: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub n_opts: Option<usize>,
    #[arg(long)]
    pub p_local: Option<f64>,
    /// One label per line; default is the subtree of each ground truth's root.
    #[arg(long)]
    pub local_labels: Option<PathBuf>,
    #[arg(long)]
    pub inject_ancestor: bool,
    #[arg(long, value_enum, default_value = "rl")]
    pub style: Style,
    #[arg(long, value_enum, default_value = "standard")]
    pub variant: ItemKind,
    #[arg(long)]
    pub skipped_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetedKind {
    Hierarchical,
    Ddx,
}

#[derive(Args, Debug)]
pub struct BuildTargetedArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long, value_enum)]
    pub variant: TargetedKind,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub skipped_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Strict,
    Lenient,
    Both,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// JSONL of `{item_id, raw_completion, dataset_tag}`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value = "strict")]
    pub mode: ParseMode,
    /// Tag preset; defaults to the config's.
    #[arg(long)]
    pub tags: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WeightingArg {
    Unweighted,
    BySize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "unweighted")]
    pub weighting: WeightingArg,
    #[arg(long)]
    pub tags: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Items to train on; default is synthetic items over the bundled taxonomy.
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub n_items: usize,
    #[command(flatten)]
    pub out: OutArgs,
    /// CSV of per-step values for plotting.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub kl_coeff: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub format_corruption: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

/// Minimal shape accepted by `build-mcq`; case files work as-is.
#[derive(Debug, Deserialize)]
struct SourceRecord {
    id: String,
    #[serde(default)]
    image_ref: String,
    diagnosis: String,
}

#[derive(Debug, Serialize)]
struct ScoredRecord<'a> {
    format_version: u32,
    item_id: &'a str,
    dataset_tag: &'a str,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

#[derive(Debug, Serialize)]
struct SkipReport<'a> {
    produced: usize,
    skipped: usize,
    reasons: &'a [Skipped],
}

fn taxonomy_path(flag: &Option<PathBuf>, cfg: &ToolConfig) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| cfg.taxonomy.clone())
        .ok_or_else(|| CliError::Usage("--taxonomy is required (or set `taxonomy` in the config)".into()))
}

fn load_tree(flag: &Option<PathBuf>, cfg: &ToolConfig) -> CliResult<TaxonomyTree> {
    let path = taxonomy_path(flag, cfg)?;
    let tree = load_taxonomy(&path).with_context(|| format!("loading taxonomy {}", path.display()))?;
    for (child, parent) in tree.malignancy_mismatches() {
        tracing::warn!(%child, %parent, "malignancy differs from parent");
    }
    Ok(tree)
}

fn load_graph(flag: &Option<PathBuf>, cfg: &ToolConfig, tree: &TaxonomyTree, required: bool) -> CliResult<DdxGraph> {
    let Some(path) = flag.clone().or_else(|| cfg.ddx.clone()) else {
        if required {
            return Err(CliError::Usage("--ddx is required (or set `ddx` in the config)".into()));
        }
        return Ok(DdxGraph::new());
    };
    let g = load_ddx(&path).with_context(|| format!("loading ddx graph {}", path.display()))?;
    for label in g.unresolved_labels(tree) {
        tracing::warn!(%label, "ddx label not in taxonomy");
    }
    for label in g.dropped_self_loops() {
        tracing::warn!(%label, "dropped ddx self-loop");
    }
    Ok(g)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    Ok(jsonl::read_path(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> CliResult {
    Ok(jsonl::write_path(path, records).with_context(|| format!("writing {}", path.display()))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn tags_for(name: &Option<String>, cfg: &ToolConfig) -> CliResult<dermrl_core::reward::TagSet> {
    match name {
        Some(n) => dermrl_core::reward::TagSet::preset(n)
            .ok_or_else(|| CliError::Usage(format!("unknown tag preset `{n}` (expected sft|rl)"))),
        None => Ok(cfg.tags()),
    }
}

pub fn run(cli: Cli) -> CliResult {
    let cfg = ToolConfig::load(cli.config.as_deref()).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    match cli.command {
        Command::Validate(a) => validate(a, &cfg),
        Command::Synthesize(a) => synthesize_cmd(a, &cfg),
        Command::BuildMcq(a) => build_mcq_cmd(a, &cfg),
        Command::BuildTargeted(a) => build_targeted(a, &cfg),
        Command::Score(a) => score(a, &cfg),
        Command::Evaluate(a) => evaluate_cmd(a, &cfg),
        Command::Simulate(a) => simulate_cmd(a, &cfg),
        Command::Serve(a) => serve(a, &cfg),
    }
}

/// `--log-level`, then `RUST_LOG`, then the config file, then `info`.
pub fn log_filter(cli: &Cli) -> String {
    if let Some(l) = &cli.log_level {
        return l.clone();
    }
    if let Ok(l) = std::env::var("RUST_LOG") {
        if !l.is_empty() {
            return l;
        }
    }
    cli.config
        .as_deref()
        .and_then(|p| ToolConfig::load(Some(p)).ok())
        .map(|c| c.log_level)
        .unwrap_or_else(|| "info".into())
}

fn validate(a: ValidateArgs, cfg: &ToolConfig) -> CliResult {
    let tree = load_tree(&a.tree.taxonomy, cfg)?;
    let graph = load_graph(&a.tree.ddx, cfg, &tree, false)?;
    let max_depth = tree.labels().filter_map(|l| tree.depth(l)).max().unwrap_or(0);
    let mut summary = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "taxonomy_checksum": tree.checksum(),
        "nodes": tree.len(),
        "roots": tree.roots().len(),
        "max_depth": max_depth,
        "malignancy_mismatches": tree.malignancy_mismatches().len(),
        "ddx_labels": graph.labels().count(),
        "ddx_edges": graph.edge_count(),
        "ddx_unresolved_labels": graph.unresolved_labels(&tree),
        "ddx_dropped_self_loops": graph.dropped_self_loops(),
        "ddx_symmetric": graph.is_symmetric(),
    });
    if let Some(path) = &a.cases {
        let cases: Vec<DiagnosticCase> = read_jsonl(path)?;
        let unresolved: Vec<&str> = cases
            .iter()
            .filter(|c| !tree.contains(&c.diagnosis))
            .map(|c| c.id.as_str())
            .collect();
        summary["cases"] = cases.len().into();
        summary["cases_unresolved"] = unresolved.len().into();
        if !unresolved.is_empty() {
            print_json(&summary);
            return Err(anyhow!("{} case(s) have diagnoses outside the taxonomy: {:?}", unresolved.len(), unresolved).into());
        }
    }
    print_json(&summary);
    Ok(())
}

fn synthesize_cmd(a: SynthesizeArgs, cfg: &ToolConfig) -> CliResult {
    let tree = load_tree(&a.tree.taxonomy, cfg)?;
    let graph = load_graph(&a.tree.ddx, cfg, &tree, false)?;
    let mix: KindMix = a.mix.parse().map_err(|e: String| CliError::Usage(e))?;
    let cases: Vec<DiagnosticCase> = read_jsonl(&a.cases)?;
    let kind = a.generator.unwrap_or(if cfg.generator.endpoint.is_some() {
        GeneratorKind::Remote
    } else {
        GeneratorKind::Mock
    });
    let generator: Box<dyn TextGenerator> = match kind {
        GeneratorKind::Mock => Box::new(MockGenerator),
        GeneratorKind::Remote => Box::new(RemoteGenerator::from_config(&cfg.generator).map_err(|e| CliError::Usage(format!("{e:#}")))?),
    };
    let options = DifferentialOptions {
        seed: a.out.seed.unwrap_or(cfg.seed),
        max_in_flight: a.max_in_flight.unwrap_or(cfg.generator.max_in_flight).max(1),
    };
    let out = synthesize(&cases, &tree, &graph, generator.as_ref(), mix, options)?;
    write_jsonl(&a.out.out, &out.trajectories)?;
    if let Some(p) = &a.sft_out {
        let sft: Vec<_> = out.trajectories.iter().map(render_sft).collect();
        write_jsonl(p, &sft)?;
    }
    report_skips(out.trajectories.len(), &out.skipped, a.skipped_out.as_deref())
}

fn report_skips(produced: usize, skipped: &[Skipped], path: Option<&Path>) -> CliResult {
    for s in skipped {
        tracing::warn!(case = %s.case_id, reason = %s.reason, "skipped");
    }
    let report = SkipReport { produced, skipped: skipped.len(), reasons: skipped };
    if let Some(p) = path {
        write_json(p, &report)?;
    }
    print_json(&serde_json::json!({ "produced": produced, "skipped": skipped.len() }));
    Ok(())
}

fn build_mcq_cmd(a: BuildMcqArgs, cfg: &ToolConfig) -> CliResult {
    let tree = load_tree(&a.tree.taxonomy, cfg)?;
    let config = McqConfig {
        n_opts: a.n_opts.unwrap_or(cfg.n_opts),
        p_local: a.p_local.unwrap_or(cfg.p_local),
        inject_ancestor: a.inject_ancestor,
        prompt_style: match a.style {
            Style::Rl => PromptStyle::RlTraining,
            Style::Eval => PromptStyle::Evaluation,
        },
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let fixed_local: Option<BTreeSet<String>> = match &a.local_labels {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
        }
        None => None,
    };
    let sources: Vec<SourceRecord> = read_jsonl(&a.sources)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.out.seed.unwrap_or(cfg.seed));
    let mut items = Vec::with_capacity(sources.len());
    let mut skipped = Vec::new();
    for s in &sources {
        let item_seed: u64 = rng.random();
        if !tree.contains(&s.diagnosis) {
            skipped.push(Skipped { case_id: s.id.clone(), reason: format!("unknown label `{}`", s.diagnosis) });
            continue;
        }
        let local = fixed_local.clone().unwrap_or_else(|| tree.same_root(&s.diagnosis));
        let source = ItemSource { id: &s.id, image_ref: &s.image_ref, ground_truth: &s.diagnosis };
        let item = build_mcq(source, Some(&local), &tree, &config, item_seed)?;
        items.push(match a.variant {
            ItemKind::Standard => item,
            ItemKind::LesionCondition => build_lesion_condition(&item),
        });
    }
    write_jsonl(&a.out.out, &items)?;
    report_skips(items.len(), &skipped, a.skipped_out.as_deref())
}

fn build_targeted(a: BuildTargetedArgs, cfg: &ToolConfig) -> CliResult {
    let tree = load_tree(&a.tree.taxonomy, cfg)?;
    let graph = load_graph(&a.tree.ddx, cfg, &tree, matches!(a.variant, TargetedKind::Ddx))?;
    let items: Vec<McqItem> = read_jsonl(&a.items)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.out.seed.unwrap_or(cfg.seed));
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for item in &items {
        let seed: u64 = rng.random();
        let built = match a.variant {
            TargetedKind::Hierarchical => build_hierarchical_variant(item, &tree, seed),
            TargetedKind::Ddx => build_ddx_variant(item, &graph, &tree, seed),
        };
        match built {
            Ok(v) => out.push(v),
            Err(e) => skipped.push(Skipped { case_id: item.id.clone(), reason: e.to_string() }),
        }
    }
    write_jsonl(&a.out.out, &out)?;
    report_skips(out.len(), &skipped, a.skipped_out.as_deref())
}

fn score(a: ScoreArgs, cfg: &ToolConfig) -> CliResult {
    let tags = tags_for(&a.tags, cfg)?;
    let items = index_items(read_jsonl::<McqItem>(&a.items)?);
    let preds: Vec<PredictionRecord> = read_jsonl(&a.predictions)?;
    let reward = cfg.reward();
    let mut out = Vec::with_capacity(preds.len());
    for p in &preds {
        let item = items
            .get(&p.item_id)
            .ok_or_else(|| anyhow!("prediction refers to unknown item `{}`", p.item_id))?;
        out.push(ScoredRecord {
            format_version: FORMAT_VERSION,
            item_id: &p.item_id,
            dataset_tag: &p.dataset_tag,
            breakdown: total_reward_with(&p.raw_completion, item, &tags, a.mode, &reward),
        });
    }
    write_jsonl(&a.out.out, &out)?;
    let n = out.len().max(1) as f64;
    let mean = |f: fn(&RewardBreakdown) -> f64| out.iter().map(|r| f(&r.breakdown)).sum::<f64>() / n;
    print_json(&serde_json::json!({
        "scored": out.len(),
        "mean_total": mean(|b| b.total),
        "mean_format": mean(|b| b.format),
        "mean_gran": mean(|b| b.gran),
        "mean_malignancy": mean(|b| b.malignancy),
    }));
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, cfg: &ToolConfig) -> CliResult {
    let tags = tags_for(&a.tags, cfg)?;
    let items = index_items(read_jsonl::<McqItem>(&a.items)?);
    let preds: Vec<PredictionRecord> = read_jsonl(&a.predictions)?;
    let weighting = match a.weighting {
        WeightingArg::Unweighted => Weighting::Unweighted,
        WeightingArg::BySize => Weighting::BySize,
    };
    let modes: &[ParseMode] = match a.mode {
        Mode::Strict => &[ParseMode::Strict],
        Mode::Lenient => &[ParseMode::Lenient],
        Mode::Both => &[ParseMode::Strict, ParseMode::Lenient],
    };
    let reports: Vec<EvalReport> = modes
        .iter()
        .map(|&m| evaluate(&preds, &items, &tags, m, weighting))
        .collect::<Result<_, _>>()?;
    for r in &reports {
        println!("mode: {}", serde_json::to_value(r.mode).expect("mode").as_str().unwrap_or(""));
        print!("{}", r.render_table());
    }
    if let Some(p) = &a.out {
        write_json(p, &serde_json::json!({ "format_version": FORMAT_VERSION, "reports": reports }))?;
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs, cfg: &ToolConfig) -> CliResult {
    let items: Vec<McqItem> = match &a.items {
        Some(p) => read_jsonl(p)?,
        None => {
            let tree = match cfg.taxonomy.as_ref() {
                Some(p) => load_taxonomy(p).with_context(|| format!("loading taxonomy {}", p.display()))?,
                None => dermrl_core::fixtures::taxonomy(),
            };
            let mcq = McqConfig { n_opts: cfg.n_opts, p_local: cfg.p_local, ..Default::default() };
            dermrl_core::fixtures::mcq_items(&tree, a.n_items, &mcq, a.out.seed.unwrap_or(cfg.seed))?
        }
    };
    let mut sim = SimConfig { reward: cfg.reward(), ..Default::default() };
    let g = &mut sim.grpo;
    g.seed = a.out.seed.unwrap_or(cfg.seed);
    if let Some(v) = a.steps {
        g.steps = v;
    }
    if let Some(v) = a.group_size {
        g.group_size = v;
    }
    if let Some(v) = a.clip_eps {
        g.clip_eps = v;
    }
    if let Some(v) = a.kl_coeff {
        g.kl_coeff = v;
    }
    if let Some(v) = a.temperature {
        g.temperature = v;
    }
    if let Some(v) = a.learning_rate {
        g.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        g.batch_size = v;
    }
    if let Some(v) = a.format_corruption {
        sim.format_corruption = v;
    }
    sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (report, _) = Simulator::new(&items, sim)?.run()?;
    write_json(&a.out.out, &report)?;
    if let Some(p) = &a.curve_out {
        std::fs::write(p, report.plot_table()).with_context(|| format!("writing {}", p.display()))?;
    }
    print_json(&serde_json::json!({
        "items": report.item_count,
        "steps": report.steps.len(),
        "initial_greedy_accuracy": report.initial_greedy_accuracy,
        "final_greedy_accuracy": report.final_greedy_accuracy,
        "final_mean_kl": report.final_mean_kl,
    }));
    Ok(())
}

fn serve(a: ServeArgs, cfg: &ToolConfig) -> CliResult {
    let tree = load_tree(&a.taxonomy, cfg)?;
    let state = Arc::new(AppState { tree, reward: cfg.reward() });
    let rt = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.bind)
            .await
            .with_context(|| format!("binding {}", a.bind))?;
        service::serve(listener, state).await.context("serving")
    })?;
    Ok(())
}
