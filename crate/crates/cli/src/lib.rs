//! Subcommands of the `judgecorr` binary.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use judgecorr::corpus::{load_dataset, sample_items, save_dataset, Item, SampleManifest};
use judgecorr::metrics::{generation_accuracy, InvalidPolicy};
use judgecorr::pipeline::{
    build_judgment_dataset, read_json, read_jsonl, read_jsonl_or_empty, run_generation_stage, run_judgment_stage,
    verify_labels, write_json, write_jsonl, GenerationRecord, JudgmentRecord, RunConfig, RunLayout, RunManifest,
    RunStatus, StageKind, TaskEntry, PROMPT_DELIVERY,
};
use judgecorr::prompts::{Strategy, TemplateRegistry};
use judgecorr::providers::{model_dir_name, CallStats, Client, DiskCache};
use judgecorr::report::{
    analyze_run, emit_correlation_table, emit_heatmap_accuracy_matrix, emit_heatmap_matrix, emit_judge_table,
    emit_metrics_table, emit_overconfidence_table, emit_scatter, AnalysisReport, TableFormat,
};

/// Exit status when a stage finished with failed records.
pub const EXIT_INCOMPLETE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "judgecorr", version, about = "Measure how answer generation relates to answer judgment")]
pub struct Cli {
    /// Completion cache directory (overrides the config's cache_dir).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Sampling seed (overrides the config's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a task and collect each model's own answers.
    Generate(GenerateArgs),
    /// Have a judge rate the agents' answers.
    Judge(JudgeArgs),
    /// Compute every metric over a run directory.
    Analyze(AnalyzeArgs),
    /// Render tables, heatmaps or scatter plots from an analysis.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub task: String,
    /// Comma-separated model ids from the config roster.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep successful records and retry only failed ones.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Cot,
    SelfRef,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Cot => Strategy::CoT,
            StrategyArg::SelfRef => Strategy::SelfReference,
        }
    }
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub judge: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub agents: Vec<String>,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Only this task; by default every sampled task in the run directory.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Exclude,
    CountIncorrect,
}

impl From<PolicyArg> for InvalidPolicy {
    fn from(p: PolicyArg) -> InvalidPolicy {
        match p {
            PolicyArg::Exclude => InvalidPolicy::Exclude,
            PolicyArg::CountIncorrect => InvalidPolicy::CountAsIncorrectPrediction,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value = "exclude")]
    pub invalid_policy: PolicyArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave pairwise items labeled as ties out of every metric.
    #[arg(long)]
    pub exclude_ties: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmitArg {
    Tables,
    Heatmaps,
    Scatter,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long, value_enum)]
    pub emit: EmitArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Generate(a) => generate(&cli, a),
        Command::Judge(a) => judge(&cli, a),
        Command::Analyze(a) => analyze(a),
        Command::Report(a) => report(a),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_config(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(cache) = &cli.cache {
        cfg.cache_dir = Some(cache.clone());
    }
    Ok(cfg)
}

fn registry(cfg: &RunConfig) -> Result<TemplateRegistry> {
    match &cfg.templates {
        Some(path) => TemplateRegistry::load(path).with_context(|| format!("loading templates {}", path.display())),
        None => Ok(TemplateRegistry::builtin()),
    }
}

fn client(cfg: &RunConfig, model: &str) -> Result<Client> {
    let endpoint = cfg.model(model)?.clone();
    let client = Client::from_endpoint(endpoint).with_context(|| format!("setting up model `{model}`"))?;
    Ok(match &cfg.cache_dir {
        Some(dir) => client.with_cache(DiskCache::new(dir)),
        None => client,
    })
}

fn stats_delta(after: CallStats, before: CallStats) -> CallStats {
    CallStats {
        cache_hits: after.cache_hits - before.cache_hits,
        cache_misses: after.cache_misses - before.cache_misses,
        provider_calls: after.provider_calls - before.provider_calls,
    }
}

fn dedup(ids: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in ids {
        if !out.contains(id) {
            out.push(id.clone());
        }
    }
    out
}

/// The sampled evaluation set of `task`, drawn on first use and reused
/// afterwards so every stage sees the same items.
fn evaluation_set(layout: &RunLayout, entry: &TaskEntry, seed: u64) -> Result<Vec<Item>> {
    let task = &entry.spec.task_id;
    let manifest = SampleManifest::for_file(&entry.spec, seed, &entry.path)?;
    let items_path = layout.items(task);
    if items_path.exists() {
        let existing: SampleManifest = read_json(&layout.sample_manifest(task))?;
        if existing.seed != manifest.seed
            || existing.source_sha256 != manifest.source_sha256
            || existing.sample_size != manifest.sample_size
        {
            bail!(
                "{} already holds a sample of `{task}` drawn with seed {} from a source with digest {}; use a fresh run directory",
                layout.root().display(),
                existing.seed,
                existing.source_sha256
            );
        }
        return Ok(load_dataset(&items_path, &entry.spec)?);
    }
    let pool = load_dataset(&entry.path, &entry.spec)?;
    let items = sample_items(&pool, entry.spec.sample_size, seed)?;
    save_dataset(&items_path, &items)?;
    write_json(&layout.sample_manifest(task), &manifest)?;
    Ok(items)
}

fn snapshot_config(layout: &RunLayout, cfg: &RunConfig) -> Result<()> {
    let path = layout.config();
    if path.exists() {
        let existing: RunConfig = read_json(&path)?;
        if existing.run_id != cfg.run_id {
            bail!("{} belongs to run `{}`, not `{}`", layout.root().display(), existing.run_id, cfg.run_id);
        }
    }
    write_json(&path, cfg)?;
    Ok(())
}

fn base_manifest(cfg: &RunConfig, stage: StageKind, registry: &TemplateRegistry, models: &[&Client]) -> RunManifest {
    RunManifest {
        run_id: cfg.run_id.clone(),
        stage,
        seed: cfg.seed,
        tasks: Vec::new(),
        agents: Vec::new(),
        judges: Vec::new(),
        strategy: None,
        template_digests: registry.digests().clone(),
        prompt_delivery: PROMPT_DELIVERY.to_string(),
        max_tokens: models
            .iter()
            .map(|c| (c.model_id().to_string(), c.endpoint().max_tokens))
            .collect::<BTreeMap<_, _>>(),
        non_reproducible: models
            .iter()
            .filter(|c| !c.endpoint().is_reproducible())
            .map(|c| c.model_id().to_string())
            .collect(),
        cache_dir: cfg.cache_dir.as_ref().map(|p| p.display().to_string()),
        cache_stats: CallStats::default(),
        failures: 0,
        status: RunStatus::Running,
        started_at: now(),
        finished_at: None,
    }
}

fn finish(manifest: &mut RunManifest, path: &Path) -> Result<()> {
    manifest.status = if manifest.failures == 0 {
        RunStatus::Complete
    } else {
        RunStatus::Incomplete
    };
    manifest.finished_at = Some(now());
    write_json(path, manifest)?;
    Ok(())
}

fn exit_for(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failures} record(s) failed; rerun with --resume to retry them");
        ExitCode::from(EXIT_INCOMPLETE)
    }
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<ExitCode> {
    let cfg = load_config(cli, &args.config)?;
    let layout = RunLayout::new(&args.out);
    let entry = cfg.task(&args.task)?.clone();
    let registry = registry(&cfg)?;
    let models = dedup(&args.models);
    let clients = models.iter().map(|m| client(&cfg, m)).collect::<Result<Vec<_>>>()?;
    for c in &clients {
        if !c.endpoint().is_reproducible() {
            eprintln!("warning: `{}` runs at temperature {}; its outputs are not reproducible", c.model_id(), c.endpoint().temperature);
        }
    }

    snapshot_config(&layout, &cfg)?;
    let items = evaluation_set(&layout, &entry, cfg.seed)?;

    let mut previous = Vec::new();
    if args.resume {
        for m in &models {
            previous.extend(read_jsonl_or_empty::<GenerationRecord>(&layout.generation(&entry.spec.task_id, m))?);
        }
    }

    let mut manifest = base_manifest(&cfg, StageKind::Generation, &registry, &clients.iter().collect::<Vec<_>>());
    manifest.tasks = vec![entry.spec.task_id.clone()];
    manifest.agents = models.clone();
    let manifest_path = layout.generation_manifest(&entry.spec.task_id);
    write_json(&manifest_path, &manifest)?;

    let records = run_generation_stage(&clients, &items, &registry, &previous)?;
    for m in &models {
        let own: Vec<&GenerationRecord> = records.iter().filter(|r| &r.model_id == m).collect();
        write_jsonl(&layout.generation(&entry.spec.task_id, m), &own)?;
        let failed = own.iter().filter(|r| r.failed()).count();
        println!(
            "{m}: accuracy {:.4} on {} items ({failed} failed)",
            generation_accuracy(&own.iter().map(|r| r.correct).collect::<Vec<_>>()).unwrap_or(0.0),
            own.len()
        );
    }

    manifest.cache_stats = clients.iter().map(Client::stats).fold(CallStats::default(), |a, b| a + b);
    manifest.failures = records.iter().filter(|r| r.failed()).count();
    finish(&mut manifest, &manifest_path)?;
    Ok(exit_for(manifest.failures))
}

fn judge(cli: &Cli, args: &JudgeArgs) -> Result<ExitCode> {
    let cfg = load_config(cli, &args.config)?;
    let layout = RunLayout::new(&args.out);
    let registry = registry(&cfg)?;
    let strategy = Strategy::from(args.strategy);
    let agents = dedup(&args.agents);
    let judge = client(&cfg, &args.judge)?;

    let tasks: Vec<&TaskEntry> = match &args.task {
        Some(t) => vec![cfg.task(t)?],
        None => cfg.tasks.iter().filter(|t| layout.items(&t.spec.task_id).exists()).collect(),
    };
    if tasks.is_empty() {
        bail!("no sampled tasks in {}; run `generate` first", layout.root().display());
    }

    let mut total_failures = 0;
    for entry in tasks {
        let task = &entry.spec.task_id;
        let items_path = layout.items(task);
        if !items_path.exists() {
            bail!("task `{task}` has not been generated in {}", layout.root().display());
        }
        let items = load_dataset(&items_path, &entry.spec)?;

        let mut agent_records = Vec::new();
        for a in &agents {
            let path = layout.generation(task, a);
            let recs: Vec<GenerationRecord> =
                read_jsonl(&path).with_context(|| format!("generation records of `{a}` for `{task}`"))?;
            if let Some(r) = recs.iter().find(|r| r.failed()) {
                bail!("generation of `{a}` on `{task}` item `{}` failed; rerun generate with --resume", r.item_id);
            }
            agent_records.extend(recs);
        }
        let judge_generation: HashMap<String, GenerationRecord> =
            read_jsonl_or_empty::<GenerationRecord>(&layout.generation(task, &args.judge))?
                .into_iter()
                .map(|r| (r.item_id.clone(), r))
                .collect();

        let jitems = build_judgment_dataset(&agent_records, &items)?;
        let out_path = layout.judgment(task, strategy, &args.judge);
        let previous: Vec<JudgmentRecord> = if args.resume {
            read_jsonl_or_empty(&out_path)?
        } else {
            Vec::new()
        };

        let mut manifest = base_manifest(&cfg, StageKind::Judgment, &registry, &[&judge]);
        manifest.tasks = vec![task.clone()];
        manifest.agents = agents.clone();
        manifest.judges = vec![args.judge.clone()];
        manifest.strategy = Some(strategy);
        let manifest_path = layout.judgment_manifest(task, strategy, &args.judge);
        write_json(&manifest_path, &manifest)?;

        let before = judge.stats();
        let out = run_judgment_stage(&judge, &jitems, &items, strategy, &judge_generation, &registry, &previous)?;
        verify_labels(&out.records, &agent_records)?;
        write_jsonl(&out_path, &out.records)?;
        write_jsonl(&layout.judgment_prompts(task, strategy, &args.judge), &out.prompts)?;

        manifest.cache_stats = stats_delta(judge.stats(), before);
        manifest.failures = out.records.iter().filter(|r| r.failed()).count();
        finish(&mut manifest, &manifest_path)?;
        total_failures += manifest.failures;
        let invalid = out.records.iter().filter(|r| !r.failed() && r.y_pred.is_none()).count();
        println!(
            "{} on {task} ({}): {} judgments, {invalid} unparseable, {} failed, {} provider calls",
            args.judge,
            strategy.slug(),
            out.records.len(),
            manifest.failures,
            manifest.cache_stats.provider_calls
        );
    }
    Ok(exit_for(total_failures))
}

fn analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let layout = RunLayout::new(&args.run);
    let report = analyze_run(&layout, args.invalid_policy.into(), args.exclude_ties)?;
    write_bytes(&args.out, &report.to_json_bytes())?;
    for c in &report.cells {
        println!(
            "{} / {} / {}: accuracy {:.4}, F1 {:.4}, delta {:.4}, r(G,J|A) {}",
            c.judge,
            c.task,
            c.strategy.slug(),
            c.generation_accuracy,
            c.judgment.f1,
            c.two_way.delta,
            c.partial_correlation
                .map(|p| format!("{:.4}{}", p.value, if p.degenerate { " (degenerate)" } else { "" }))
                .unwrap_or_else(|| "NA".into())
        );
    }
    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    Ok(exit_for(failures))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn report(args: &ReportArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: AnalysisReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.report.display()))?;
    let format = match args.format {
        FormatArg::Csv => TableFormat::Csv,
        FormatArg::Md => TableFormat::Markdown,
    };
    let ext = format.extension();
    let out = &args.out;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = out.join(name);
        write_bytes(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    for strategy in report.strategies() {
        let s = strategy.slug();
        match args.emit {
            EmitArg::Tables => {
                put(format!("judge_table_{s}.{ext}"), emit_judge_table(&report, strategy, format)?)?;
                put(format!("overconfidence_{s}.{ext}"), emit_overconfidence_table(&report, strategy, format)?)?;
                put(format!("correlation_{s}.{ext}"), emit_correlation_table(&report, strategy, format)?)?;
            }
            EmitArg::Heatmaps => {
                for task in report.tasks_for(strategy) {
                    let t = model_dir_name(task);
                    put(format!("heatmap_{t}_{s}.{ext}"), emit_heatmap_matrix(&report, task, strategy, format)?)?;
                    put(
                        format!("heatmap_accuracy_{t}_{s}.{ext}"),
                        emit_heatmap_accuracy_matrix(&report, task, strategy, format)?,
                    )?;
                }
            }
            EmitArg::Scatter => {
                for task in report.tasks_for(strategy) {
                    let t = model_dir_name(task);
                    let scatter = emit_scatter(&report, task, strategy)?;
                    put(format!("scatter_{t}_{s}.csv"), scatter.csv)?;
                    put(format!("scatter_{t}_{s}.svg"), scatter.svg)?;
                }
            }
        }
    }
    if args.emit == EmitArg::Tables {
        put(format!("metrics.{ext}"), emit_metrics_table(&report, format)?)?;
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
