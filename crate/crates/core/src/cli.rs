//! Command-line front end.
//!
//! Every option can also come from a JSON object passed with `--config`,
//! keyed by the long flag name in snake_case (`--iou-rule` is `iou_rule`).
//! Flags win over the config file; `RIVEG_BACKEND_URL` is consulted when
//! neither names a backend.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 backend error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use futures::stream::{self, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::agreement::annotation_agreement;
use crate::corpus::{
    dataset_stats, load_dataset, read_samples, validate_sample, DatasetSplit, LoadOptions, Sample,
    SplitName,
};
use crate::export::{ve_dataset, vg_dataset};
use crate::pipeline::{
    llm_generate, read_expansions, run_pipeline, Backend, BackendConfig, BackendTarget,
    ConfigError, EntitySource, Expansions, PipelineError, PipelineOptions,
};
use crate::prompts::{
    build_expansion_prompt, build_knowledge_prompt, read_knowledge_sets, AnnotatedExample,
    KnowledgeQuery, KnowledgeSets, PromptConfig, CANONICAL_LLM,
};
use crate::retrieval::{read_features, ExampleIndex, DEFAULT_TOP_N};
use crate::scoring::{
    emit_report, iou_sweep, read_candidates, read_predictions, score_task, topn_prec_at,
    write_predictions, IouRule, MatchPolicy, ReportFormat, ScoreReport, Task,
    DEFAULT_IOU_THRESHOLD,
};
use crate::seqlab::{
    decode_entities, read_emissions, CrfParams, CrfParamsFile, EntitySpan, LabelScheme,
};

pub const BACKEND_ENV: &str = "RIVEG_BACKEND_URL";

const DEFAULT_THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const DEFAULT_MAX_TOKENS: u32 = 256;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "gsmner",
    version,
    about = "Grounded / segmented multimodal NER toolkit"
)]
pub struct Cli {
    /// JSON file with option values keyed by snake_case flag name
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a gold JSONL file against the corpus schema and rules
    Validate(ValidateArgs),
    /// Corpus statistics: samples, entities, groundable entities, masks
    Stats(StatsArgs),
    /// Build knowledge or expansion prompts, optionally running them
    Prompt(PromptArgs),
    /// Export entailment (ve) or grounding (vg) fine-tuning pairs
    Export(ExportArgs),
    /// Run the entailment -> grounding -> segmentation cascade
    Pipeline(PipelineArgs),
    /// Score predictions on MNER / GMNER / SMNER / EEG / EES
    Score(ScoreArgs),
    /// Score predictions across a range of IoU thresholds
    Sweep(SweepArgs),
    /// Top-N precision of scored candidate boxes
    Topn(TopnArgs),
    /// Inter-annotator agreement (Fleiss' kappa, mean Dice)
    Agree(AgreeArgs),
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Reject unknown fields instead of warning
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json or markdown
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptArgs {
    /// knowledge or expansion
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Annotated in-context examples (JSONL: id, sentence, image_description, annotation)
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Fusion feature vectors for pool and query samples (JSONL: id, vec)
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Number of in-context examples
    #[arg(long)]
    pub topn: Option<usize>,
    /// Replacement for the bundled knowledge prompt head
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Replacement for the bundled expansion examples (JSON array)
    #[arg(long)]
    pub expansion_examples: Option<PathBuf>,
    /// Knowledge records (JSONL: id, llm, knowledge) used as expansion background
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    /// Which LLM's knowledge to use, and the name recorded for generated text
    #[arg(long)]
    pub llm: Option<String>,
    /// Backend URL or "mock"; without one, prompts are emitted unanswered
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportArgs {
    /// ve or vg
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Expansion records (JSONL: id, surface, expansion)
    #[arg(long)]
    pub expansions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Emission scores (JSONL: id, emissions); ground CRF-predicted spans instead of gold spans
    #[arg(long)]
    pub emissions: Option<PathBuf>,
    /// CRF parameters (JSON: labels, transition, start, end); zeros when absent
    #[arg(long)]
    pub crf: Option<PathBuf>,
    #[arg(long)]
    pub expansions: Option<PathBuf>,
    /// Backend URL or "mock"
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub mock_lookup: Option<PathBuf>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Abort on the first failed entity
    #[arg(long)]
    pub fail_fast: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Task name, comma-separated list, or "all"
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// gte or gt
    #[arg(long)]
    pub iou_rule: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Task name, comma-separated list, or "all" (default GMNER,SMNER)
    #[arg(long)]
    pub task: Option<String>,
    /// Comma-separated, strictly increasing, in [0, 1)
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub iou_rule: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TopnArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Candidate boxes (JSONL: id, surface, candidates[{box, score}])
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub topn: Option<usize>,
    #[arg(long)]
    pub iou: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AgreeArgs {
    /// One gold-format JSONL file per annotator; repeat the flag
    #[arg(long)]
    pub annotations: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses argv (program name first) into a command. Help and version
/// requests come back as errors carrying the rendered text.
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

/// Full entry point: parse, execute, report. Returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<Map<String, Value>>, CliError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(Some(m)),
        Ok(_) => Err(CliError::Usage(format!(
            "{}: config must be a JSON object",
            path.display()
        ))),
        Err(e) => Err(CliError::Usage(format!("{}: {e}", path.display()))),
    }
}

fn is_unset(v: &Value) -> bool {
    match v {
        Value::Null | Value::Bool(false) => true,
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Overlays flags that were given on the command line onto the config.
fn merge<T: Serialize + DeserializeOwned>(
    cli: T,
    config: Option<&Map<String, Value>>,
) -> Result<T, CliError> {
    let Some(config) = config else {
        return Ok(cli);
    };
    let Value::Object(flags) = serde_json::to_value(&cli).expect("args serialize") else {
        unreachable!("args serialize to an object")
    };
    let mut merged = config.clone();
    for (k, v) in flags {
        if !is_unset(&v) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn parse_opt<T: std::str::FromStr>(v: Option<&str>, default: T) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match v {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|e: T::Err| CliError::Usage(e.to_string())),
    }
}

fn parse_tasks(spec: Option<&str>, default: &[Task]) -> Result<Vec<Task>, CliError> {
    match spec {
        None => Ok(default.to_vec()),
        Some(s) if s.eq_ignore_ascii_case("all") => Ok(Task::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<Task>()
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| data_err(path, e))
}

fn load_gold(path: &Path, strict: bool) -> Result<DatasetSplit, CliError> {
    load_dataset(path, SplitName::Test, LoadOptions { strict }).map_err(|e| data_err(path, e))
}

fn load_expansions(path: Option<&Path>) -> Result<Expansions, CliError> {
    match path {
        Some(p) => read_expansions(open(p)?).map_err(|e| data_err(p, e)),
        None => Ok(Expansions::new()),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| data_err(p, e)),
        None => stdout
            .write_all(bytes)
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    buf
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Backend(format!("cannot start async runtime: {e}")))
}

fn backend_config(
    backend: Option<String>,
    mock_lookup: Option<PathBuf>,
    max_inflight: Option<usize>,
    timeout_ms: Option<u64>,
    retries: Option<u32>,
) -> Option<BackendConfig> {
    let target = backend.or_else(|| std::env::var(BACKEND_ENV).ok())?;
    let d = BackendConfig::default();
    Some(BackendConfig {
        target: BackendTarget::from(target),
        timeout_ms: timeout_ms.unwrap_or(d.timeout_ms),
        max_in_flight: max_inflight.unwrap_or(d.max_in_flight),
        retries: retries.unwrap_or(d.retries),
        mock_lookup,
    })
}

fn connect(cfg: &BackendConfig, samples: &[Sample]) -> Result<Arc<dyn Backend>, CliError> {
    cfg.connect(samples).map_err(|e| match e {
        ConfigError::ZeroTimeout | ConfigError::ZeroInFlight => CliError::Usage(e.to_string()),
        ConfigError::Lookup { .. } => CliError::Data(e.to_string()),
        ConfigError::Client(_) => CliError::Backend(e.to_string()),
    })
}

pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let config = config.as_ref();
    match cli.command {
        Command::Validate(a) => validate(merge(a, config)?, stdout, stderr),
        Command::Stats(a) => stats(merge(a, config)?, stdout),
        Command::Prompt(a) => prompt(merge(a, config)?, stdout),
        Command::Export(a) => export(merge(a, config)?, stdout),
        Command::Pipeline(a) => pipeline(merge(a, config)?, stdout, stderr),
        Command::Score(a) => score(merge(a, config)?, stdout),
        Command::Sweep(a) => sweep(merge(a, config)?, stdout),
        Command::Topn(a) => topn(merge(a, config)?, stdout),
        Command::Agree(a) => agree(merge(a, config)?, stdout),
    }
}

#[derive(Serialize)]
struct ViolationLine<'a> {
    id: &'a str,
    field: &'a str,
    rule: &'a str,
}

fn validate(
    a: ValidateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let gold = need(a.gold, "gold")?;
    let samples = read_samples(open(&gold)?, LoadOptions { strict: a.strict })
        .map_err(|e| data_err(&gold, e))?;
    let mut lines = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::new();
    for s in &samples {
        if !seen.insert(s.id.as_str()) {
            lines.push(ViolationLine {
                id: &s.id,
                field: "id",
                rule: "duplicate sample id",
            });
        }
        all.push((s, validate_sample(s)));
    }
    for (s, vs) in &all {
        for v in vs {
            lines.push(ViolationLine {
                id: &s.id,
                field: &v.field,
                rule: &v.rule,
            });
        }
    }
    emit(a.out.as_deref(), &jsonl(&lines), stdout)?;
    let _ = writeln!(
        stderr,
        "{} samples, {} violations",
        samples.len(),
        lines.len()
    );
    if lines.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{}: {} violations",
            gold.display(),
            lines.len()
        )))
    }
}

fn stats(a: StatsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let gold = need(a.gold, "gold")?;
    let format = parse_opt(a.format.as_deref(), ReportFormat::Json)?;
    let st = dataset_stats(&load_gold(&gold, a.strict)?);
    let bytes = match format {
        ReportFormat::Json => pretty(&st),
        ReportFormat::Markdown => {
            let mut s =
                String::from("| Samples | Entities | Groundable | Masks |\n|---|---|---|---|\n");
            s.push_str(&format!(
                "| {} | {} | {} | {} |\n\n| Type | Groundable | Ungroundable |\n|---|---|---|\n",
                st.n_samples, st.n_entities, st.n_groundable, st.n_masks
            ));
            for (t, c) in &st.per_type {
                s.push_str(&format!(
                    "| {t} | {} | {} |\n",
                    c.groundable, c.ungroundable
                ));
            }
            s.into_bytes()
        }
    };
    emit(a.out.as_deref(), &bytes, stdout)
}

#[derive(Serialize)]
struct KnowledgePromptLine {
    id: String,
    examples: Vec<String>,
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    llm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    knowledge: Option<String>,
}

#[derive(Serialize)]
struct ExpansionPromptLine {
    id: String,
    surface: String,
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    expansion: Option<String>,
}

fn image_description(s: &Sample) -> &str {
    s.description
        .as_deref()
        .or(s.caption.as_deref())
        .unwrap_or("")
}

/// Answers prompts through the backend with bounded concurrency, in order.
fn answer_prompts(
    backend: &dyn Backend,
    prompts: &[String],
    max_inflight: usize,
    max_tokens: u32,
) -> Result<Vec<String>, CliError> {
    let rt = runtime()?;
    rt.block_on(async {
        let results: Vec<_> = stream::iter(prompts)
            .map(|p| llm_generate(backend, p, max_tokens))
            .buffered(max_inflight)
            .collect()
            .await;
        results
            .into_iter()
            .map(|r| {
                r.map(|t| t.trim().to_string())
                    .map_err(|e| CliError::Backend(e.to_string()))
            })
            .collect()
    })
}

fn prompt(a: PromptArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let kind = need(a.kind.clone(), "kind")?;
    let gold = need(a.gold.clone(), "gold")?;
    let split = load_gold(&gold, false)?;
    let cfg = PromptConfig::load(a.head.as_deref(), a.expansion_examples.as_deref())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let llm = a.llm.clone().unwrap_or_else(|| CANONICAL_LLM.to_string());
    let backend_cfg = backend_config(
        a.backend.clone(),
        None,
        a.max_inflight,
        a.timeout_ms,
        a.retries,
    );
    let backend = backend_cfg
        .as_ref()
        .map(|c| connect(c, split.samples()))
        .transpose()?;
    let max_inflight = backend_cfg.as_ref().map_or(1, |c| c.max_in_flight);
    let max_tokens = a.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS);

    let bytes = match kind.as_str() {
        "knowledge" => {
            let pool_path = need(a.pool, "pool")?;
            let feat_path = need(a.features, "features")?;
            let n = a.topn.unwrap_or(DEFAULT_TOP_N);
            if n == 0 {
                return Err(CliError::Usage("--topn must be at least 1".into()));
            }
            let pool: Vec<AnnotatedExample> = read_jsonl(&pool_path)?;
            let features = read_features(open(&feat_path)?).map_err(|e| data_err(&feat_path, e))?;
            let by_id: HashMap<&str, &crate::retrieval::FeatureVector> =
                features.iter().map(|f| (f.id.as_str(), f)).collect();
            let feature = |id: &str| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| data_err(&feat_path, format!("no feature vector for {id:?}")))
            };
            let pool_vecs = pool
                .iter()
                .map(|ex| feature(&ex.id).cloned())
                .collect::<Result<Vec<_>, _>>()?;
            let index = ExampleIndex::build(&pool_vecs).map_err(|e| data_err(&feat_path, e))?;
            let mut lines = Vec::new();
            for s in split.samples() {
                // one extra so the query itself can be dropped if it is in the pool
                let hits = index
                    .topn_similar(feature(&s.id)?, n + 1)
                    .map_err(|e| data_err(&feat_path, e))?;
                let chosen: Vec<AnnotatedExample> = hits
                    .iter()
                    .filter(|h| h.id != s.id)
                    .take(n)
                    .map(|h| pool[h.position].clone())
                    .collect();
                let sentence = s.sentence();
                let query = KnowledgeQuery {
                    sentence: &sentence,
                    image_description: image_description(s),
                };
                lines.push(KnowledgePromptLine {
                    id: s.id.clone(),
                    examples: chosen.iter().map(|e| e.id.clone()).collect(),
                    prompt: build_knowledge_prompt(&cfg.knowledge_head, &chosen, &query),
                    llm: None,
                    knowledge: None,
                });
            }
            if let Some(b) = &backend {
                let prompts: Vec<String> = lines.iter().map(|l| l.prompt.clone()).collect();
                for (l, text) in lines.iter_mut().zip(answer_prompts(
                    b.as_ref(),
                    &prompts,
                    max_inflight,
                    max_tokens,
                )?) {
                    l.llm = Some(llm.clone());
                    l.knowledge = Some(text);
                }
            }
            jsonl(&lines)
        }
        "expansion" => {
            let sets: KnowledgeSets = match &a.knowledge {
                Some(p) => read_knowledge_sets(open(p)?).map_err(|e| data_err(p, e))?,
                None => KnowledgeSets::new(),
            };
            let mut lines = Vec::new();
            for s in split.samples() {
                let background = sets
                    .get(&llm)
                    .and_then(|m| m.get(&s.id))
                    .or_else(|| s.knowledge.as_ref().and_then(|k| k.get(&llm)))
                    .map(String::as_str)
                    .unwrap_or_else(|| image_description(s));
                let sentence = s.sentence();
                for e in &s.entities {
                    let prompt = build_expansion_prompt(
                        &cfg.expansion_examples,
                        background,
                        &sentence,
                        &e.surface,
                    )
                    .map_err(|err| data_err(&gold, format!("sample {:?}: {err}", s.id)))?;
                    lines.push(ExpansionPromptLine {
                        id: s.id.clone(),
                        surface: e.surface.clone(),
                        prompt,
                        expansion: None,
                    });
                }
            }
            if let Some(b) = &backend {
                let prompts: Vec<String> = lines.iter().map(|l| l.prompt.clone()).collect();
                for (l, text) in lines.iter_mut().zip(answer_prompts(
                    b.as_ref(),
                    &prompts,
                    max_inflight,
                    max_tokens,
                )?) {
                    l.expansion = Some(text);
                }
            }
            jsonl(&lines)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown prompt kind {other:?} (expected knowledge or expansion)"
            )))
        }
    };
    emit(a.out.as_deref(), &bytes, stdout)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| data_err(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn export(a: ExportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let kind = need(a.kind, "kind")?;
    let gold = need(a.gold, "gold")?;
    let split = load_gold(&gold, false)?;
    let expansions = load_expansions(a.expansions.as_deref())?;
    let bytes = match kind.as_str() {
        "ve" => jsonl(&ve_dataset(&split, &expansions).map_err(|e| data_err(&gold, e))?),
        "vg" => jsonl(&vg_dataset(&split, &expansions).map_err(|e| data_err(&gold, e))?),
        other => {
            return Err(CliError::Usage(format!(
                "unknown export kind {other:?} (expected ve or vg)"
            )))
        }
    };
    emit(a.out.as_deref(), &bytes, stdout)
}

fn predicted_spans(
    split: &DatasetSplit,
    emissions: &Path,
    crf: Option<&Path>,
) -> Result<HashMap<String, Vec<EntitySpan>>, CliError> {
    let table = read_emissions(open(emissions)?).map_err(|e| data_err(emissions, e))?;
    let params = match crf {
        Some(p) => {
            let file: CrfParamsFile =
                serde_json::from_reader(open(p)?).map_err(|e| data_err(p, e))?;
            file.into_params().map_err(|e| data_err(p, e))?
        }
        None => CrfParams::zeros(LabelScheme::SIZE),
    };
    let mut out = HashMap::new();
    for s in split.samples() {
        let e = table
            .get(&s.id)
            .ok_or_else(|| data_err(emissions, format!("no emissions for sample {:?}", s.id)))?;
        if e.rows() != s.tokens.len() {
            return Err(data_err(
                emissions,
                format!(
                    "sample {:?}: {} emission rows for {} tokens",
                    s.id,
                    e.rows(),
                    s.tokens.len()
                ),
            ));
        }
        let spans = decode_entities(e, &params).map_err(|err| data_err(emissions, err))?;
        out.insert(s.id.clone(), spans);
    }
    Ok(out)
}

fn pipeline(
    a: PipelineArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let gold = need(a.gold, "gold")?;
    let split = load_gold(&gold, false)?;
    let spans = match &a.emissions {
        Some(p) => Some(predicted_spans(&split, p, a.crf.as_deref())?),
        None => None,
    };
    let source = spans
        .as_ref()
        .map_or(EntitySource::Gold, EntitySource::Predicted);
    let expansions = load_expansions(a.expansions.as_deref())?;
    let cfg = backend_config(
        a.backend,
        a.mock_lookup,
        a.max_inflight,
        a.timeout_ms,
        a.retries,
    )
    .ok_or_else(|| {
        CliError::Usage(format!(
            "no backend: pass --backend URL|mock or set {BACKEND_ENV}"
        ))
    })?;
    let backend = connect(&cfg, split.samples())?;
    let opts = PipelineOptions {
        max_in_flight: cfg.max_in_flight,
        fail_fast: a.fail_fast,
    };
    let run = runtime()?
        .block_on(run_pipeline(
            split.samples(),
            source,
            &expansions,
            backend.as_ref(),
            opts,
        ))
        .map_err(|e| match e {
            PipelineError::Backend { .. } => CliError::Backend(e.to_string()),
            _ => CliError::Data(e.to_string()),
        })?;
    if run.missing_expansions > 0 {
        log::warn!(
            "{} entities had no expansion; used an empty one",
            run.missing_expansions
        );
    }
    let mut buf = Vec::new();
    write_predictions(&mut buf, &run.records).map_err(|e| CliError::Data(e.to_string()))?;
    emit(a.out.as_deref(), &buf, stdout)?;
    for f in &run.failures {
        for e in &f.errors {
            let _ = writeln!(
                stderr,
                "sample {:?}, entity {} ({:?}): {}",
                f.id, e.index, e.surface, e.message
            );
        }
    }
    if run.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Backend(format!(
            "{} of {} samples failed",
            run.failures.len(),
            split.len()
        )))
    }
}

fn load_preds(path: &Path) -> Result<Vec<crate::scoring::PredictionRecord>, CliError> {
    read_predictions(open(path)?).map_err(|e| data_err(path, e))
}

fn score(a: ScoreArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let gold = need(a.gold, "gold")?;
    let pred = need(a.pred, "pred")?;
    let tasks = parse_tasks(a.task.as_deref(), &Task::ALL)?;
    let rule = parse_opt(a.iou_rule.as_deref(), IouRule::Gte)?;
    let format = parse_opt(a.format.as_deref(), ReportFormat::Json)?;
    let iou = a.iou.unwrap_or(DEFAULT_IOU_THRESHOLD);
    let split = load_gold(&gold, false)?;
    let preds = load_preds(&pred)?;
    let mut reports = Vec::new();
    for t in tasks {
        let policy = MatchPolicy::new(t, iou, rule).map_err(|e| CliError::Usage(e.to_string()))?;
        reports.push(score_task(&split, &preds, &policy).map_err(|e| data_err(&pred, e))?);
    }
    emit(
        a.out.as_deref(),
        emit_report(&reports, format).as_bytes(),
        stdout,
    )
}

fn sweep(a: SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let gold = need(a.gold, "gold")?;
    let pred = need(a.pred, "pred")?;
    let tasks = parse_tasks(a.task.as_deref(), &[Task::Gmner, Task::Smner])?;
    let rule = parse_opt(a.iou_rule.as_deref(), IouRule::Gte)?;
    let format = parse_opt(a.format.as_deref(), ReportFormat::Json)?;
    let thresholds = if a.thresholds.is_empty() {
        DEFAULT_THRESHOLDS.to_vec()
    } else {
        a.thresholds
    };
    crate::scoring::check_thresholds(&thresholds).map_err(|e| CliError::Usage(e.to_string()))?;
    let split = load_gold(&gold, false)?;
    let preds = load_preds(&pred)?;
    let mut reports: Vec<ScoreReport> = Vec::new();
    for t in tasks {
        reports.extend(
            iou_sweep(&split, &preds, t, rule, &thresholds).map_err(|e| data_err(&pred, e))?,
        );
    }
    emit(
        a.out.as_deref(),
        emit_report(&reports, format).as_bytes(),
        stdout,
    )
}

fn topn(a: TopnArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let gold = need(a.gold, "gold")?;
    let cands = need(a.candidates, "candidates")?;
    let n = a.topn.unwrap_or(1);
    if n == 0 {
        return Err(CliError::Usage("--topn must be at least 1".into()));
    }
    let iou = a.iou.unwrap_or(DEFAULT_IOU_THRESHOLD);
    let split = load_gold(&gold, false)?;
    let candidates = read_candidates(open(&cands)?).map_err(|e| data_err(&cands, e))?;
    let report = topn_prec_at(&split, &candidates, n, iou).map_err(|e| data_err(&cands, e))?;
    emit(a.out.as_deref(), &pretty(&report), stdout)
}

fn agree(a: AgreeArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if a.annotations.len() < 2 {
        return Err(CliError::Usage(
            "agree needs --annotations at least twice".into(),
        ));
    }
    let mut all = Vec::new();
    for p in &a.annotations {
        all.push(read_samples(open(p)?, LoadOptions::default()).map_err(|e| data_err(p, e))?);
    }
    let report = annotation_agreement(&all).map_err(|e| CliError::Data(e.to_string()))?;
    emit(a.out.as_deref(), &pretty(&report), stdout)
}
