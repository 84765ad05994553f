//! Sequence labelling: the BIO codec and linear-chain CRF inference used for
//! entity prediction.

mod bio;
mod crf;

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bio::{
    bio_from_spans, spans_from_bio, validate_bio, BioMode, BioViolation, EntitySpan, Label,
    LabelScheme, TagSequence,
};
pub use crf::{
    crf_nll_and_grad, log_partition, sequence_score, viterbi_decode, CrfGradient, CrfParams,
    EmissionMatrix,
};

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("label sequence is empty")]
    EmptySequence,
    #[error("label index {0} out of range for {1} labels")]
    LabelOutOfRange(usize, usize),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("invalid BIO sequence: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidBio(Vec<BioViolation>),
    #[error("span {start}..{end} out of range for length {length}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        length: usize,
    },
    #[error("overlapping spans {0:?} and {1:?}")]
    OverlappingSpans(EntitySpan, EntitySpan),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Decodes the best BIO path and returns its entity spans. Orphan `I-T`
/// labels in the decoded path are repaired to `B-T` first.
pub fn decode_entities(e: &EmissionMatrix, p: &CrfParams) -> Result<Vec<EntitySpan>, SeqError> {
    if p.labels() != LabelScheme::SIZE {
        return Err(SeqError::Shape(format!(
            "BIO decoding needs {} labels, parameters have {}",
            LabelScheme::SIZE,
            p.labels()
        )));
    }
    let (path, _) = viterbi_decode(e, p)?;
    let tags = TagSequence::from_indices(&path)?;
    let repaired = validate_bio(&tags, BioMode::Lenient).expect("lenient mode never fails");
    spans_from_bio(&repaired)
}

/// One line of an emission file; columns follow [`LabelScheme`] order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub id: String,
    pub emissions: Vec<Vec<f64>>,
}

pub fn read_emissions<R: BufRead>(r: R) -> Result<HashMap<String, EmissionMatrix>, SeqError> {
    let mut out = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| SeqError::Parse {
            line: i + 1,
            message,
        };
        let rec: EmissionRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let m = EmissionMatrix::from_rows(&rec.emissions).map_err(|e| parse_err(e.to_string()))?;
        if m.labels() != LabelScheme::SIZE {
            return Err(parse_err(format!(
                "expected {} label columns, got {}",
                LabelScheme::SIZE,
                m.labels()
            )));
        }
        if out.insert(rec.id.clone(), m).is_some() {
            return Err(parse_err(format!("duplicate id {:?}", rec.id)));
        }
    }
    Ok(out)
}

/// CRF parameters on disk, with an explicit label ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrfParamsFile {
    pub labels: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParamsFile {
    pub fn from_params(p: &CrfParams) -> Self {
        Self {
            labels: LabelScheme::names(),
            transition: p.transition.clone(),
            start: p.start.clone(),
            end: p.end.clone(),
        }
    }

    /// Reorders the parameters into [`LabelScheme`] order. The file must name
    /// each of the nine labels exactly once.
    pub fn into_params(self) -> Result<CrfParams, SeqError> {
        let l = LabelScheme::SIZE;
        if self.labels.len() != l {
            return Err(SeqError::Shape(format!(
                "expected {l} labels, got {}",
                self.labels.len()
            )));
        }
        // file position -> scheme index
        let mut perm = Vec::with_capacity(l);
        for name in &self.labels {
            let idx = name.parse::<Label>()?.index();
            if perm.contains(&idx) {
                return Err(SeqError::Shape(format!("label {name} listed twice")));
            }
            perm.push(idx);
        }
        if self.start.len() != l
            || self.end.len() != l
            || self.transition.len() != l
            || self.transition.iter().any(|r| r.len() != l)
        {
            return Err(SeqError::Shape("parameter arrays must be 9 / 9x9".into()));
        }
        let mut p = CrfParams::zeros(l);
        for (a, &ia) in perm.iter().enumerate() {
            p.start[ia] = self.start[a];
            p.end[ia] = self.end[a];
            for (b, &ib) in perm.iter().enumerate() {
                p.transition[ia][ib] = self.transition[a][b];
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType;
    use std::io::Cursor;

    #[test]
    fn decode_entities_repairs_orphans() {
        // argmax path: I-PER I-PER O B-LOC
        let mut e = EmissionMatrix::zeros(4, 9);
        for (i, lab) in [2, 2, 0, 3].into_iter().enumerate() {
            e.set(i, lab, 5.0);
        }
        let spans = decode_entities(&e, &CrfParams::zeros(9)).unwrap();
        assert_eq!(
            spans,
            vec![
                EntitySpan {
                    start: 0,
                    end: 2,
                    etype: EntityType::Per
                },
                EntitySpan {
                    start: 3,
                    end: 4,
                    etype: EntityType::Loc
                },
            ]
        );
    }

    #[test]
    fn params_file_reorders_labels() {
        let mut file = CrfParamsFile::from_params(&CrfParams::zeros(9));
        // swap O and B-PER in the file ordering
        file.labels.swap(0, 1);
        file.start[0] = 1.5; // belongs to B-PER now
        file.transition[0][1] = -2.0; // B-PER -> O
        let p = file.into_params().unwrap();
        assert_eq!(p.start[1], 1.5);
        assert_eq!(p.start[0], 0.0);
        assert_eq!(p.transition[1][0], -2.0);
    }

    #[test]
    fn params_file_rejects_duplicates() {
        let mut file = CrfParamsFile::from_params(&CrfParams::zeros(9));
        file.labels[1] = "O".into();
        assert!(file.into_params().is_err());
    }

    #[test]
    fn reads_emission_lines() {
        let row = format!("[{}]", ["0.0"; 9].join(","));
        let text = format!("{{\"id\":\"a\",\"emissions\":[{row},{row}]}}\n\n");
        let map = read_emissions(Cursor::new(text)).unwrap();
        assert_eq!(map["a"].rows(), 2);
        let bad = "{\"id\":\"a\",\"emissions\":[[0.0,1.0]]}";
        assert!(matches!(
            read_emissions(Cursor::new(bad)),
            Err(SeqError::Parse { line: 1, .. })
        ));
    }
}
