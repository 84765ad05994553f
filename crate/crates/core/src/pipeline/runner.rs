use std::collections::HashMap;
use std::io::BufRead;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    segment_from_box, ve_classify, vg_ground, Backend, BackendError, PredictionTriple, VeLabel,
};
use crate::corpus::Sample;
use crate::prompts::compose_referring_expression;
use crate::scoring::PredictionRecord;
use crate::seqlab::EntitySpan;

/// Expansion text keyed by `(sample id, entity surface)`.
pub type Expansions = HashMap<(String, String), String>;

/// One expansion file line. Extra fields are ignored, so the output of the
/// expansion prompt step can be fed back directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub id: String,
    pub surface: String,
    pub expansion: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sample {id:?}, entity {index}: {source}")]
    Backend {
        id: String,
        index: usize,
        source: BackendError,
    },
    #[error("sample {id:?}: {message}")]
    Span { id: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("max in-flight must be at least 1")]
    ZeroInFlight,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_expansions<R: BufRead>(r: R) -> Result<Expansions, PipelineError> {
    let mut out = Expansions::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| PipelineError::Parse {
            line: i + 1,
            message,
        };
        let rec: ExpansionRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if out
            .insert((rec.id.clone(), rec.surface.clone()), rec.expansion)
            .is_some()
        {
            return Err(parse_err(format!(
                "duplicate key ({}, {})",
                rec.id, rec.surface
            )));
        }
    }
    Ok(out)
}

/// Where the entities to ground come from.
#[derive(Debug, Clone, Copy)]
pub enum EntitySource<'a> {
    Gold,
    /// Predicted spans per sample id; samples without an entry have none.
    Predicted(&'a HashMap<String, Vec<EntitySpan>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub max_in_flight: usize,
    pub fail_fast: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            fail_fast: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityFailure {
    pub index: usize,
    pub surface: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleFailure {
    pub id: String,
    pub errors: Vec<EntityFailure>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineRun {
    /// Completed samples, in input order.
    pub records: Vec<PredictionRecord>,
    /// Samples with at least one failed entity, in input order.
    pub failures: Vec<SampleFailure>,
    /// Entities that had no expansion and were grounded with an empty one.
    pub missing_expansions: usize,
}

struct Job<'a> {
    sample: &'a Sample,
    index: usize,
    span: EntitySpan,
    surface: String,
    expansion: &'a str,
}

async fn ground(backend: &dyn Backend, job: &Job<'_>) -> Result<PredictionTriple, BackendError> {
    let expr = compose_referring_expression(&job.surface, job.span.etype, job.expansion)
        .map_err(|e| BackendError::Rejected(e.to_string()))?;
    let image = &job.sample.image;
    let verdict = ve_classify(backend, image, &expr).await?;
    let region = match verdict.label {
        VeLabel::Contradiction => None,
        VeLabel::Entailment => {
            let g = vg_ground(backend, image, &expr).await?;
            let mask = segment_from_box(backend, image, &g.bbox).await?;
            Some((g.bbox, mask))
        }
    };
    Ok(PredictionTriple::new(
        job.surface.clone(),
        job.span.start,
        job.span.end,
        job.span.etype,
        region,
    ))
}

fn entity_spans(sample: &Sample, source: EntitySource<'_>) -> Result<Vec<EntitySpan>, String> {
    let spans = match source {
        EntitySource::Gold => sample
            .entities
            .iter()
            .map(|e| EntitySpan {
                start: e.start,
                end: e.end,
                etype: e.etype,
            })
            .collect(),
        EntitySource::Predicted(map) => map.get(&sample.id).cloned().unwrap_or_default(),
    };
    for s in &spans {
        if s.start >= s.end || s.end > sample.tokens.len() {
            return Err(format!(
                "span {}..{} out of range for {} tokens",
                s.start,
                s.end,
                sample.tokens.len()
            ));
        }
    }
    Ok(spans)
}

/// Runs the cascade for every entity of every sample with at most
/// `max_in_flight` entities in progress at once. Results come back in input
/// order whatever the completion order.
pub async fn run_pipeline(
    samples: &[Sample],
    source: EntitySource<'_>,
    expansions: &Expansions,
    backend: &dyn Backend,
    opts: PipelineOptions,
) -> Result<PipelineRun, PipelineError> {
    if opts.max_in_flight == 0 {
        return Err(PipelineError::ZeroInFlight);
    }
    let mut run = PipelineRun::default();
    let mut jobs = Vec::new();
    // per sample: number of jobs, or the span error that sank it
    let mut plan: Vec<Result<usize, String>> = Vec::with_capacity(samples.len());
    for sample in samples {
        match entity_spans(sample, source) {
            Ok(spans) => {
                plan.push(Ok(spans.len()));
                for (index, span) in spans.into_iter().enumerate() {
                    let surface = sample.tokens[span.start..span.end].join(" ");
                    let expansion = match expansions.get(&(sample.id.clone(), surface.clone())) {
                        Some(x) => x.as_str(),
                        None => {
                            run.missing_expansions += 1;
                            ""
                        }
                    };
                    jobs.push(Job {
                        sample,
                        index,
                        span,
                        surface,
                        expansion,
                    });
                }
            }
            Err(message) if opts.fail_fast => {
                return Err(PipelineError::Span {
                    id: sample.id.clone(),
                    message,
                })
            }
            Err(message) => plan.push(Err(message)),
        }
    }

    let mut results = stream::iter(&jobs)
        .map(|job| async move { ground(backend, job).await })
        .buffered(opts.max_in_flight);
    let mut outcomes = Vec::with_capacity(jobs.len());
    while let Some(r) = results.next().await {
        if opts.fail_fast {
            if let Err(source) = r {
                let job = &jobs[outcomes.len()];
                return Err(PipelineError::Backend {
                    id: job.sample.id.clone(),
                    index: job.index,
                    source,
                });
            }
        }
        outcomes.push(r);
    }

    let mut outcomes = outcomes.into_iter().zip(&jobs);
    for (sample, entry) in samples.iter().zip(plan) {
        let n = match entry {
            Ok(n) => n,
            Err(message) => {
                run.failures.push(SampleFailure {
                    id: sample.id.clone(),
                    errors: vec![EntityFailure {
                        index: 0,
                        surface: String::new(),
                        message,
                    }],
                });
                continue;
            }
        };
        let mut triples = Vec::with_capacity(n);
        let mut errors = Vec::new();
        for (outcome, job) in outcomes.by_ref().take(n) {
            match outcome {
                Ok(t) => triples.push(t),
                Err(e) => errors.push(EntityFailure {
                    index: job.index,
                    surface: job.surface.clone(),
                    message: e.to_string(),
                }),
            }
        }
        if errors.is_empty() {
            run.records.push(PredictionRecord {
                id: sample.id.clone(),
                triples,
            });
        } else {
            log::warn!(
                "sample {:?} failed: {} entity error(s)",
                sample.id,
                errors.len()
            );
            run.failures.push(SampleFailure {
                id: sample.id.clone(),
                errors,
            });
        }
    }
    Ok(run)
}
