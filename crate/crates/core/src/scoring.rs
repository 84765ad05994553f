//! Five-task evaluation (MNER, GMNER, SMNER, EEG, EES), Top-N region
//! precision, IoU threshold sweeps and report rendering.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BBox, DatasetSplit, GoldEntity};
use crate::metrics::{box_iou, mask_iou};
use crate::pipeline::PredictionTriple;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("prediction for unknown sample {0:?}")]
    UnknownSample(String),
    #[error("sample {id:?}: predicted span {start}..{end} out of range for {len} tokens")]
    SpanOutOfRange {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("IoU threshold {0} outside [0, 1)")]
    Threshold(f64),
    #[error("thresholds must be strictly increasing")]
    UnsortedThresholds,
    #[error("n must be at least 1")]
    ZeroN,
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown IoU rule {0:?} (expected gte or gt)")]
    UnknownRule(String),
    #[error("duplicate candidate list for ({0}, {1})")]
    DuplicateCandidates(String, String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "MNER")]
    Mner,
    #[serde(rename = "GMNER")]
    Gmner,
    #[serde(rename = "SMNER")]
    Smner,
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "EES")]
    Ees,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Mner, Task::Gmner, Task::Smner, Task::Eeg, Task::Ees];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Mner => "MNER",
            Task::Gmner => "GMNER",
            Task::Smner => "SMNER",
            Task::Eeg => "EEG",
            Task::Ees => "EES",
        }
    }

    fn checks_type(&self) -> bool {
        matches!(self, Task::Mner | Task::Gmner | Task::Smner)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, ScoringError> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ScoringError::UnknownTask(s.to_string()))
    }
}

/// How an IoU is compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouRule {
    #[default]
    Gte,
    Gt,
}

impl IouRule {
    pub fn passes(&self, iou: f64, threshold: f64) -> bool {
        match self {
            IouRule::Gte => iou >= threshold,
            IouRule::Gt => iou > threshold,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            IouRule::Gte => "gte",
            IouRule::Gt => "gt",
        }
    }
}

impl FromStr for IouRule {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, ScoringError> {
        match s {
            "gte" => Ok(IouRule::Gte),
            "gt" => Ok(IouRule::Gt),
            other => Err(ScoringError::UnknownRule(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPolicy {
    task: Task,
    iou_threshold: f64,
    iou_rule: IouRule,
}

impl MatchPolicy {
    pub fn new(task: Task, iou_threshold: f64, iou_rule: IouRule) -> Result<Self, ScoringError> {
        if !(0.0..1.0).contains(&iou_threshold) {
            return Err(ScoringError::Threshold(iou_threshold));
        }
        Ok(Self {
            task,
            iou_threshold,
            iou_rule,
        })
    }

    /// Default threshold 0.5 with the `gte` rule.
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            iou_rule: IouRule::Gte,
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }

    pub fn iou_rule(&self) -> IouRule {
        self.iou_rule
    }

    fn passes(&self, iou: f64) -> bool {
        self.iou_rule.passes(iou, self.iou_threshold)
    }
}

/// Predicted triples of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub triples: Vec<PredictionTriple>,
}

fn box_region_ok(pred: &PredictionTriple, gold: &GoldEntity, policy: &MatchPolicy) -> bool {
    match (pred.bbox(), gold.is_groundable()) {
        (None, false) => true,
        (Some(p), true) => gold.boxes.iter().any(|g| policy.passes(box_iou(p, g))),
        _ => false,
    }
}

fn mask_region_ok(pred: &PredictionTriple, gold: &GoldEntity, policy: &MatchPolicy) -> bool {
    match (pred.mask(), gold.masks.is_empty()) {
        (None, true) => true,
        // canvas mismatches count as no overlap
        (Some(p), false) => gold
            .masks
            .iter()
            .any(|g| mask_iou(p, g).is_ok_and(|iou| policy.passes(iou))),
        _ => false,
    }
}

/// Whether `pred` gets credit for `gold` under the policy's task.
pub fn triple_correct(pred: &PredictionTriple, gold: &GoldEntity, policy: &MatchPolicy) -> bool {
    if pred.start() != gold.start || pred.end() != gold.end {
        return false;
    }
    if policy.task.checks_type() && pred.etype() != gold.etype {
        return false;
    }
    match policy.task {
        Task::Mner => true,
        Task::Gmner | Task::Eeg => box_region_ok(pred, gold, policy),
        Task::Smner | Task::Ees => mask_region_ok(pred, gold, policy),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub task: Task,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_pred: usize,
    pub n_gold: usize,
    pub n_correct: usize,
    pub iou_threshold: f64,
    pub iou_rule: IouRule,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ScoreReport {
    fn from_counts(policy: &MatchPolicy, n_pred: usize, n_gold: usize, n_correct: usize) -> Self {
        Self {
            task: policy.task,
            precision: ratio(n_correct, n_pred),
            recall: ratio(n_correct, n_gold),
            // equals 2PR/(P+R), and 0 when nothing matched
            f1: ratio(2 * n_correct, n_pred + n_gold),
            n_pred,
            n_gold,
            n_correct,
            iou_threshold: policy.iou_threshold,
            iou_rule: policy.iou_rule,
        }
    }
}

/// Micro-averaged P/R/F1 with greedy one-to-one matching: predictions are
/// taken in order and each consumes the first unconsumed gold entity of its
/// sample that it is correct for.
pub fn score_task(
    gold: &DatasetSplit,
    preds: &[PredictionRecord],
    policy: &MatchPolicy,
) -> Result<ScoreReport, ScoringError> {
    let mut consumed: HashMap<&str, Vec<bool>> = HashMap::new();
    let mut n_pred = 0;
    let mut n_correct = 0;
    for rec in preds {
        let sample = gold
            .get(&rec.id)
            .ok_or_else(|| ScoringError::UnknownSample(rec.id.clone()))?;
        let used = consumed
            .entry(sample.id.as_str())
            .or_insert_with(|| vec![false; sample.entities.len()]);
        for t in &rec.triples {
            if t.start() >= t.end() || t.end() > sample.tokens.len() {
                return Err(ScoringError::SpanOutOfRange {
                    id: rec.id.clone(),
                    start: t.start(),
                    end: t.end(),
                    len: sample.tokens.len(),
                });
            }
            n_pred += 1;
            let hit = sample
                .entities
                .iter()
                .enumerate()
                .find(|(i, g)| !used[*i] && triple_correct(t, g, policy));
            if let Some((i, _)) = hit {
                used[i] = true;
                n_correct += 1;
            }
        }
    }
    Ok(ScoreReport::from_counts(
        policy,
        n_pred,
        gold.entity_count(),
        n_correct,
    ))
}

/// Scores every task at the policy's threshold and rule.
pub fn score_all(
    gold: &DatasetSplit,
    preds: &[PredictionRecord],
    iou_threshold: f64,
    iou_rule: IouRule,
) -> Result<Vec<ScoreReport>, ScoringError> {
    Task::ALL
        .into_iter()
        .map(|task| {
            score_task(
                gold,
                preds,
                &MatchPolicy::new(task, iou_threshold, iou_rule)?,
            )
        })
        .collect()
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<(), ScoringError> {
    for &t in thresholds {
        if !(0.0..1.0).contains(&t) {
            return Err(ScoringError::Threshold(t));
        }
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScoringError::UnsortedThresholds);
    }
    Ok(())
}

/// One report per threshold; thresholds must be strictly increasing.
pub fn iou_sweep(
    gold: &DatasetSplit,
    preds: &[PredictionRecord],
    task: Task,
    iou_rule: IouRule,
    thresholds: &[f64],
) -> Result<Vec<ScoreReport>, ScoringError> {
    check_thresholds(thresholds)?;
    thresholds
        .iter()
        .map(|&t| score_task(gold, preds, &MatchPolicy::new(task, t, iou_rule)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Scored candidate regions for one entity mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub surface: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNReport {
    pub n: usize,
    pub iou_threshold: f64,
    pub hits: usize,
    pub total: usize,
    pub precision: f64,
}

/// Fraction of groundable gold entities whose `n` best candidates (by
/// descending score, ties in list order) include a box with IoU at least
/// `threshold` against one of the entity's gold boxes. Candidates are looked
/// up by `(sample id, surface)`; entities without a list count as misses.
pub fn topn_prec_at(
    gold: &DatasetSplit,
    candidates: &[CandidateRecord],
    n: usize,
    threshold: f64,
) -> Result<TopNReport, ScoringError> {
    if n == 0 {
        return Err(ScoringError::ZeroN);
    }
    let mut by_key: HashMap<(&str, &str), &[Candidate]> = HashMap::new();
    for c in candidates {
        if by_key
            .insert((c.id.as_str(), c.surface.as_str()), &c.candidates)
            .is_some()
        {
            return Err(ScoringError::DuplicateCandidates(
                c.id.clone(),
                c.surface.clone(),
            ));
        }
    }
    let (mut hits, mut total) = (0, 0);
    for s in gold.samples() {
        for g in s.entities.iter().filter(|g| g.is_groundable()) {
            total += 1;
            let Some(list) = by_key.get(&(s.id.as_str(), g.surface.as_str())) else {
                continue;
            };
            let mut ranked: Vec<&Candidate> = list.iter().collect();
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
            let hit = ranked
                .iter()
                .take(n)
                .any(|c| g.boxes.iter().any(|b| box_iou(&c.bbox, b) >= threshold));
            if hit {
                hits += 1;
            }
        }
    }
    Ok(TopNReport {
        n,
        iou_threshold: threshold,
        hits,
        total,
        precision: ratio(hits, total),
    })
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>, ScoringError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| ScoringError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>, ScoringError> {
    read_jsonl(r)
}

pub fn read_candidates<R: BufRead>(r: R) -> Result<Vec<CandidateRecord>, ScoringError> {
    read_jsonl(r)
}

pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!(
                "unknown format {other:?} (expected json or markdown)"
            )),
        }
    }
}

/// JSON array of reports, or a markdown table with one row per report and
/// percentages to two decimals.
pub fn emit_report(reports: &[ScoreReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::from(
                "| Task | IoU | Pre. | Rec. | F1 | #pred | #gold | #correct |\n\
                 |------|-----|------|------|----|-------|-------|----------|\n",
            );
            for r in reports {
                let rule = if r.iou_rule == IouRule::Gt { ">" } else { ">=" };
                s.push_str(&format!(
                    "| {} | {}{} | {:.2} | {:.2} | {:.2} | {} | {} | {} |\n",
                    r.task,
                    rule,
                    r.iou_threshold,
                    100.0 * r.precision,
                    100.0 * r.recall,
                    100.0 * r.f1,
                    r.n_pred,
                    r.n_gold,
                    r.n_correct
                ));
            }
            s
        }
    }
}
