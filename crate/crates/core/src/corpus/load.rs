use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use super::{DatasetSplit, Sample, SplitName, Violation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: schema error at `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate sample id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: sample {id:?} is invalid: {}", join_violations(.violations))]
    Invalid {
        line: usize,
        id: String,
        violations: Vec<Violation>,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject unknown fields instead of warning about them.
    pub strict: bool,
}

/// Loads and validates a gold JSONL split. Blank lines are skipped.
pub fn load_dataset(
    path: impl AsRef<Path>,
    name: SplitName,
    opts: LoadOptions,
) -> Result<DatasetSplit, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let samples = read_samples(BufReader::new(file), opts)?;
    DatasetSplit::new(name, samples)
}

/// Parses gold JSONL records without running sample validation.
pub fn read_samples<R: BufRead>(reader: R, opts: LoadOptions) -> Result<Vec<Sample>, CorpusError> {
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            line: line_no,
            message: e.to_string(),
        })?;
        let unknown = unknown_fields(&value);
        if !unknown.is_empty() {
            if opts.strict {
                return Err(CorpusError::Schema {
                    line: line_no,
                    field: unknown[0].clone(),
                    message: "unknown field".into(),
                });
            }
            log::warn!("line {line_no}: ignoring unknown fields {unknown:?}");
        }
        let sample: Sample = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            CorpusError::Schema {
                line: line_no,
                field: schema_field(&path, &inner),
                message: inner,
            }
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes samples as JSONL, one object per line.
pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// appends the missing field name, if any, to the path of the enclosing object
fn schema_field(path: &str, message: &str) -> String {
    let missing = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next());
    match (path, missing) {
        (".", Some(m)) => m.to_string(),
        (p, Some(m)) => format!("{p}.{m}"),
        (p, None) => p.to_string(),
    }
}

const SAMPLE_KEYS: &[&str] = &[
    "id",
    "tokens",
    "image",
    "caption",
    "description",
    "knowledge",
    "entities",
];
const IMAGE_KEYS: &[&str] = &["path", "width", "height"];
const ENTITY_KEYS: &[&str] = &["surface", "start", "end", "type", "boxes", "masks"];
const MASK_KEYS: &[&str] = &["w", "h", "counts"];

fn unknown_fields(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    collect_unknown(v, SAMPLE_KEYS, "", &mut out);
    if let Some(img) = v.get("image") {
        collect_unknown(img, IMAGE_KEYS, "image.", &mut out);
    }
    if let Some(Value::Array(ents)) = v.get("entities") {
        for (i, e) in ents.iter().enumerate() {
            collect_unknown(e, ENTITY_KEYS, &format!("entities[{i}]."), &mut out);
            if let Some(Value::Array(masks)) = e.get("masks") {
                for (j, m) in masks.iter().enumerate() {
                    collect_unknown(
                        m,
                        MASK_KEYS,
                        &format!("entities[{i}].masks[{j}]."),
                        &mut out,
                    );
                }
            }
        }
    }
    out
}

fn collect_unknown(v: &Value, known: &[&str], prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = v {
        out.extend(
            map.keys()
                .filter(|k| !known.contains(&k.as_str()))
                .map(|k| format!("{prefix}{k}")),
        );
    }
}
