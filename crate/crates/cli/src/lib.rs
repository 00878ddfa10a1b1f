//! The `lfag` command line: one subcommand per stage, JSON config with
//! environment interpolation, and exit codes 0 (ok), 1 (invalid input or
//! usage) and 2 (provider or I/O failure).

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use clap::{Parser, Subcommand};
use serde::Serialize;

use lfag_core::annotator::{annotate_records, AnnotateOptions, AnnotatorError, FIXED_TIMESTAMP};
use lfag_core::cleaner::{clean, CleanerError};
use lfag_core::corpus::{
    read_jsonl, read_records, to_sorted_json, to_sorted_json_pretty, validate_dataset, write_jsonl,
    AbstractSetRecord, Dataset, DatasetPaths, Decoder, IoError, Record, RecordKind, RecordRules,
};
use lfag_core::hdacr::{detect, HdacrError};
use lfag_core::metrics::{
    article_entity_recall, heading_entity_recall, heading_soft_recall, rouge, rubric_grade, MetricError, MetricReport,
};
use lfag_core::miner::{extract_outline, load_dir, load_manifest, parse_article, MinerError, ParsedArticle, ARTICLES_FILE};
use lfag_core::pipelines::{build_local_index, run_pipeline, GeneratedArticle, PipelineError, PipelineInputs, PipelineMode};
use lfag_core::providers::{ProviderError, Providers};
use lfag_core::retriever::{retrieve_abstract_sets, Fetcher, RetrieverError};
use lfag_core::text::Lang;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{1}")]
    Validation(String, String),
    #[error("{0}")]
    Io(String),
    #[error("{1}")]
    Provider(String, String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Validation(..) => 1,
            Self::Io(_) | Self::Provider(..) => 2,
        }
    }

    pub fn rule_id(&self) -> &str {
        match self {
            Self::Usage(_) => "E_USAGE",
            Self::Validation(rule, _) | Self::Provider(rule, _) => rule,
            Self::Io(_) => "E_IO",
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => Self::Io(e.to_string()),
            IoError::Record { .. } => Self::Validation(e.rule_id().into(), e.to_string()),
        }
    }
}

impl From<MinerError> for CliError {
    fn from(e: MinerError) -> Self {
        match e {
            MinerError::Io { .. } => Self::Io(e.to_string()),
            _ => Self::Validation(e.rule_id().into(), e.to_string()),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Config(_) | ProviderError::Precondition(_) => Self::Validation("E_CONFIG".into(), e.to_string()),
            _ => Self::Provider("E_PROVIDER".into(), e.to_string()),
        }
    }
}

impl From<RetrieverError> for CliError {
    fn from(e: RetrieverError) -> Self {
        match e {
            RetrieverError::Provider { .. } => Self::Provider(e.rule_id().into(), e.to_string()),
            _ => Self::Validation(e.rule_id().into(), e.to_string()),
        }
    }
}

impl From<AnnotatorError> for CliError {
    fn from(e: AnnotatorError) -> Self {
        match e {
            AnnotatorError::Provider { .. } => Self::Provider(e.rule_id().into(), e.to_string()),
            _ => Self::Validation(e.rule_id().into(), e.to_string()),
        }
    }
}

impl From<HdacrError> for CliError {
    fn from(e: HdacrError) -> Self {
        match e {
            HdacrError::Ner { .. } | HdacrError::Embed { .. } => Self::Provider("E_PROVIDER".into(), e.to_string()),
            _ => Self::Validation("E_HDACR".into(), e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Precondition(_) => Self::Validation(e.rule_id().into(), e.to_string()),
            PipelineError::Retriever(r) => r.into(),
            _ => Self::Provider(e.rule_id().into(), e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Precondition(_) => Self::Validation(e.rule_id().into(), e.to_string()),
            _ => Self::Provider(e.rule_id().into(), e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lfag", version, about = "Build, clean and evaluate long-form article generation datasets")]
struct Cli {
    /// JSON run config; `${VAR}` is replaced from the environment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every generator call; also pins provenance timestamps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Check inputs and print the plan without network access or writes.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse source articles into outlines and citation-marked paragraphs.
    Mine {
        /// A directory of .wiki/.html files or a JSON manifest.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lang: Option<Lang>,
    },
    /// Fetch cited sources and build abstract sets.
    Retrieve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate question-answer pairs from abstract sets.
    Annotate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Apply the richness, relevance, coverage and answer-length filters.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check every record of a dataset directory.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        min_answer_words: Option<usize>,
    },
    /// Score generated articles against reference outlines and texts.
    Evaluate {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// `all` or a comma list of heading_soft_recall, heading_entity_recall,
        /// rouge, entity_recall, rubric.
        #[arg(long, default_value = "all")]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one article with a baseline pipeline.
    Generate {
        #[arg(long)]
        topic: String,
        #[arg(long)]
        mode: PipelineMode,
        /// Dataset directory backing local and grounded modes.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check generated text against reference text for unsupported entities.
    Hdacr {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

const METRICS: [&str; 5] = ["heading_soft_recall", "heading_entity_recall", "rouge", "entity_recall", "rubric"];

fn cancel_flag() -> Arc<AtomicBool> {
    static FLAG: OnceLock<Arc<AtomicBool>> = OnceLock::new();
    FLAG.get_or_init(|| {
        let flag = Arc::new(AtomicBool::new(false));
        let f = flag.clone();
        if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
            log::debug!("no interrupt handler: {e}");
        }
        flag
    })
    .clone()
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            let obj = serde_json::json!({ "error": e.rule_id(), "message": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{}", to_sorted_json(&obj));
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(level) = cli.log_level {
        cfg.log_level = level;
    }
    let _ = env_logger::Builder::new()
        .parse_filters(&std::env::var("RUST_LOG").unwrap_or_else(|_| cfg.log_level.clone()))
        .format_target(false)
        .try_init();
    if cfg.workers == 0 {
        return Err(CliError::Validation("E_CONFIG".into(), "workers must be at least 1".into()));
    }
    if let Some(seed) = cfg.seed {
        cfg.pipeline.gen.seed = seed;
        cfg.pipeline.timestamp.get_or_insert_with(|| FIXED_TIMESTAMP.to_string());
    }
    cfg.retrieve.workers = cfg.workers;
    cfg.pipeline.web.workers = cfg.workers;
    check_inputs(&cli.command)?;
    if cli.dry_run {
        let plan = serde_json::json!({ "command": format!("{:?}", cli.command), "config": cfg });
        eprintln!("{}", to_sorted_json_pretty(&plan));
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn check_inputs(cmd: &Command) -> Result<(), CliError> {
    let need = |p: &Path| -> Result<(), CliError> {
        if p.exists() {
            Ok(())
        } else {
            Err(CliError::Validation("E_PATH".into(), format!("{} does not exist", p.display())))
        }
    };
    match cmd {
        Command::Mine { input, .. }
        | Command::Retrieve { input, .. }
        | Command::Annotate { input, .. }
        | Command::Clean { input, .. }
        | Command::Validate { input, .. } => need(input),
        Command::Evaluate { gen, reference, metrics, .. } => {
            need(gen)?;
            need(reference)?;
            parse_metrics(metrics).map(|_| ())
        }
        Command::Generate { corpus, mode, .. } => match (mode, corpus) {
            (PipelineMode::Local | PipelineMode::Grounded, None) => {
                Err(CliError::Usage(format!("--corpus is required in {mode} mode")))
            }
            (_, Some(c)) => need(c),
            _ => Ok(()),
        },
        Command::Hdacr { generated, reference, .. } => {
            need(generated)?;
            need(reference)
        }
    }
}

fn parse_metrics(spec: &str) -> Result<Vec<&'static str>, CliError> {
    if spec == "all" {
        return Ok(METRICS.to_vec());
    }
    spec.split(',')
        .map(str::trim)
        .map(|m| {
            METRICS
                .iter()
                .copied()
                .find(|k| *k == m)
                .ok_or_else(|| CliError::Usage(format!("unknown metric `{m}`; expected all or {}", METRICS.join(", "))))
        })
        .collect()
}

fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        Command::Mine { input, out, lang } => mine(&input, &out, lang.unwrap_or(cfg.lang)),
        Command::Retrieve { input, out } => retrieve(&input, &out, cfg),
        Command::Annotate { input, out, templates } => annotate(&input, &out, templates, cfg),
        Command::Clean { input, out, report } => clean_cmd(&input, &out, report, cfg),
        Command::Validate { input, report, min_answer_words } => validate(&input, report.as_deref(), min_answer_words, cfg),
        Command::Evaluate { gen, reference, metrics, out } => evaluate(&gen, &reference, &metrics, &out, cfg),
        Command::Generate { topic, mode, corpus, out } => generate(&topic, mode, corpus.as_deref(), &out, cfg),
        Command::Hdacr { generated, reference, threshold, out } => hdacr(&generated, &reference, threshold, &out, cfg),
    }
}

fn providers(cfg: &RunConfig) -> Result<Providers, CliError> {
    Ok(Providers::from_config(&cfg.providers, &cfg.search)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(to_sorted_json_pretty(value) + "\n"))
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Carries dataset files the stage does not produce into its output
/// directory, so each stage's output is a complete dataset directory.
fn carry_over(input: &Path, out: &Path, produced: &[&str]) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    if same_dir(input, out) {
        return Ok(());
    }
    let names = [RecordKind::Outline.file_name(), RecordKind::AbstractSet.file_name(), RecordKind::Qa.file_name(), ARTICLES_FILE];
    for name in names.into_iter().filter(|n| !produced.contains(n)) {
        let src = input.join(name);
        if src.is_file() {
            std::fs::copy(&src, out.join(name)).map_err(|e| CliError::Io(format!("{}: {e}", src.display())))?;
        }
    }
    Ok(())
}

fn read_articles(dir: &Path) -> Result<Option<Vec<ParsedArticle>>, CliError> {
    let path = dir.join(ARTICLES_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    Ok(Some(read_jsonl(&path)?))
}

fn mine(input: &Path, out: &Path, lang: Lang) -> Result<(), CliError> {
    let docs = if input.is_dir() { load_dir(input, lang)? } else { load_manifest(input, lang)? };
    let mut articles = Vec::new();
    let mut failed = 0;
    for doc in &docs {
        match parse_article(doc) {
            Ok(a) => articles.push(a),
            Err(e @ (MinerError::NoStructure(_) | MinerError::EmptyBody(_))) => {
                log::warn!("skipping `{}`: {e}", doc.topic);
                failed += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let outlines: Vec<_> = articles.iter().map(extract_outline).collect();
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write_jsonl(&out.join(RecordKind::Outline.file_name()), &outlines)?;
    write_jsonl(&out.join(ARTICLES_FILE), &articles)?;
    log::info!("mined {} articles ({failed} skipped)", articles.len());
    Ok(())
}

fn retrieve(input: &Path, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let articles = read_articles(input)?
        .ok_or_else(|| CliError::Validation("E_PATH".into(), format!("{} has no {ARTICLES_FILE}", input.display())))?;
    let providers = providers(cfg)?;
    let fetcher = Fetcher::new(cfg.fetch.clone());
    let output = retrieve_abstract_sets(&articles, &fetcher, providers.embedder.as_ref(), &cfg.retrieve)?;
    carry_over(input, out, &[RecordKind::AbstractSet.file_name()])?;
    write_jsonl(&out.join(RecordKind::AbstractSet.file_name()), &output.records)?;
    write_json(&out.join("retrieve_report.json"), &serde_json::json!({ "records": output.records.len(), "failures": output.failures }))?;
    log::info!("built {} abstract sets; {} sources failed", output.records.len(), output.failures.len());
    Ok(())
}

fn annotate(input: &Path, out: &Path, templates: Option<PathBuf>, cfg: &RunConfig) -> Result<(), CliError> {
    let path = input.join(RecordKind::AbstractSet.file_name());
    if !path.is_file() {
        return Err(CliError::Validation("E_PATH".into(), format!("{} not found", path.display())));
    }
    let sets: Vec<AbstractSetRecord> = read_records(&path, RecordKind::AbstractSet, &Decoder::default())?
        .into_iter()
        .filter_map(|r| match r {
            Record::AbstractSet(s) => Some(s),
            _ => None,
        })
        .collect();
    let mut section = cfg.annotate.clone();
    if templates.is_some() {
        section.templates = templates;
    }
    let bank = section.bank()?;
    let mut opts = match cfg.seed {
        Some(seed) => AnnotateOptions::seeded(seed),
        None => AnnotateOptions::default(),
    };
    opts.rules = RecordRules { min_answer_words: cfg.cleaner.min_answer_words.min(opts.rules.min_answer_words) };
    let providers = providers(cfg)?;
    let output = annotate_records(&sets, providers.generator.as_ref(), &bank, &opts)?;
    carry_over(input, out, &[RecordKind::Qa.file_name()])?;
    write_jsonl(&out.join(RecordKind::Qa.file_name()), &output.records)?;
    write_json(
        &out.join("annotate_report.json"),
        &serde_json::json!({ "records": output.records.len(), "rejected": output.rejected, "skipped": output.skipped }),
    )?;
    log::info!("annotated {} QA pairs; {} rejected", output.records.len(), output.rejected.len());
    Ok(())
}

fn clean_cmd(input: &Path, out: &Path, report: Option<PathBuf>, cfg: &RunConfig) -> Result<(), CliError> {
    let lenient = Decoder { rules: RecordRules { min_answer_words: 0 }, ..Decoder::default() };
    let data = Dataset::read_dir(input, &lenient)?;
    let articles = read_articles(input)?;
    let providers = providers(cfg)?;
    let report_path = report.unwrap_or_else(|| out.join("clean_report.json"));
    let cancel = cancel_flag();
    match clean(data, articles.as_deref(), &cfg.cleaner, &providers, Some(&cancel)) {
        Ok((cleaned, report)) => {
            cleaned.write_dir(out)?;
            carry_over(input, out, &[RecordKind::Outline.file_name(), RecordKind::AbstractSet.file_name(), RecordKind::Qa.file_name()])?;
            write_json(&report_path, &report)?;
            log::info!("kept {} records, dropped {}", cleaned.len(), report.total_dropped());
            Ok(())
        }
        Err(abort) => {
            write_json(&report_path, &abort.report)?;
            Err(match abort.error {
                CleanerError::Config(m) => CliError::Validation("E_CONFIG".into(), m),
                CleanerError::Hdacr { source, .. } => (*source).into(),
                CleanerError::Cancelled => CliError::Io("interrupted; partial report written".into()),
            })
        }
    }
}

fn validate(input: &Path, report: Option<&Path>, min_answer_words: Option<usize>, cfg: &RunConfig) -> Result<(), CliError> {
    let paths = DatasetPaths::in_dir(input);
    if RecordKind::ALL.iter().all(|k| paths.get(*k).is_none()) {
        return Err(CliError::Validation("E_PATH".into(), format!("no dataset files in {}", input.display())));
    }
    let decoder = Decoder {
        rules: RecordRules { min_answer_words: min_answer_words.unwrap_or(cfg.cleaner.min_answer_words) },
        ..Decoder::default()
    };
    let result = validate_dataset(&paths, &decoder).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(path) = report {
        write_json(path, &result)?;
    }
    for kind in RecordKind::ALL {
        let c = result.count(kind);
        log::info!("{kind}: {} lines, {} valid, {} invalid", c.lines, c.valid, c.invalid);
    }
    match result.violation_count() {
        0 => Ok(()),
        n => Err(CliError::Validation("E_INVALID_RECORDS".into(), format!("{n} records violate the schema"))),
    }
}

fn evaluate(gen: &Path, reference: &Path, metrics: &str, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let wanted = parse_metrics(metrics)?;
    let outlines: Vec<_> = read_records(&reference.join(RecordKind::Outline.file_name()), RecordKind::Outline, &Decoder::default())?
        .into_iter()
        .filter_map(|r| match r {
            Record::Outline(o) => Some(o),
            _ => None,
        })
        .collect();
    let articles = read_articles(reference)?.unwrap_or_default();
    let mut files: Vec<PathBuf> = std::fs::read_dir(gen)
        .map_err(|e| CliError::Io(format!("{}: {e}", gen.display())))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let providers = providers(cfg)?;
    let mut reports = Vec::new();
    for file in files {
        let raw = std::fs::read_to_string(&file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
        let Ok(article) = serde_json::from_str::<GeneratedArticle>(&raw) else {
            log::warn!("{} is not a generated article; skipped", file.display());
            continue;
        };
        let Some(ref_outline) = outlines.iter().find(|o| o.topic == article.topic) else {
            log::warn!("no reference outline for `{}`; skipped", article.topic);
            continue;
        };
        let ref_text = articles
            .iter()
            .find(|a| a.topic == article.topic)
            .map(|a| a.sections.iter().flat_map(|s| &s.paragraphs).cloned().collect::<Vec<_>>().join("\n\n"));
        let gen_text = article.plain_text();
        let mut report = MetricReport {
            topic: article.topic.clone(),
            heading_soft_recall: None,
            heading_entity_recall: None,
            rouge: None,
            entity_recall: None,
            rubric: None,
        };
        for m in &wanted {
            match *m {
                "heading_soft_recall" => {
                    report.heading_soft_recall =
                        Some(heading_soft_recall(&article.outline, ref_outline, providers.embedder.as_ref(), &cfg.metrics)?)
                }
                "heading_entity_recall" => {
                    report.heading_entity_recall =
                        Some(heading_entity_recall(&article.outline, ref_outline, &providers.ner, &cfg.metrics)?)
                }
                "rouge" => match &ref_text {
                    Some(r) if !r.trim().is_empty() => report.rouge = Some(rouge(&gen_text, r, cfg.metrics.lang, cfg.metrics.rouge_l)?),
                    _ => log::warn!("no reference text for `{}`; rouge skipped", article.topic),
                },
                "entity_recall" => match &ref_text {
                    Some(r) => report.entity_recall = Some(article_entity_recall(&gen_text, r, &providers.ner, &cfg.metrics)?),
                    None => log::warn!("no reference text for `{}`; entity recall skipped", article.topic),
                },
                "rubric" if !gen_text.trim().is_empty() => {
                    report.rubric = Some(rubric_grade(&gen_text, &article.topic, providers.generator.as_ref(), &cfg.pipeline.gen)?)
                }
                _ => {}
            }
        }
        reports.push(report);
    }
    write_jsonl(out, &reports)?;
    log::info!("evaluated {} articles", reports.len());
    Ok(())
}

fn generate(topic: &str, mode: PipelineMode, corpus: Option<&Path>, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let providers = providers(cfg)?;
    let sets: Vec<AbstractSetRecord> = match corpus {
        Some(dir) => {
            let path = dir.join(RecordKind::AbstractSet.file_name());
            read_records(&path, RecordKind::AbstractSet, &Decoder::default())?
                .into_iter()
                .filter_map(|r| match r {
                    Record::AbstractSet(s) => Some(s),
                    _ => None,
                })
                .collect()
        }
        None => Vec::new(),
    };
    let index = match mode {
        PipelineMode::Local => Some(build_local_index(&sets, cfg.pipeline.bm25)?),
        _ => None,
    };
    let grounded: Vec<AbstractSetRecord> = sets.iter().filter(|s| s.topic == topic).cloned().collect();
    if mode == PipelineMode::Grounded && grounded.is_empty() {
        log::warn!("no abstract sets for `{topic}` in the corpus; sections get no references");
    }
    let fetcher = Fetcher::new(cfg.fetch.clone());
    let inputs = PipelineInputs {
        index: index.as_ref(),
        fetcher: (mode == PipelineMode::Web).then_some(&fetcher),
        grounded: (mode == PipelineMode::Grounded).then_some(grounded.as_slice()),
    };
    let article = run_pipeline(topic, mode, &cfg.pipeline, &providers, inputs)?;
    write_json(out, &article)?;
    write_text(&out.with_extension("md"), &article.to_markdown())?;
    log::info!("wrote {} sections with {} citations", article.sections.len(), article.citations().len());
    Ok(())
}

fn hdacr(generated: &Path, reference: &Path, threshold: Option<f64>, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
    let g = read(generated)?;
    let r = read(reference)?;
    let mut hcfg = cfg.hdacr.clone();
    if let Some(t) = threshold {
        hcfg.threshold = t;
    }
    let providers = providers(cfg)?;
    let report = detect(&g, &r, &hcfg, &providers)?;
    write_json(out, &report)?;
    log::info!("verdict: {:?}, {} unverifiable entities", report.verdict, report.unverifiable.len());
    Ok(())
}
