//! Exact top-N cosine search over precomputed fusion features, used to pick
//! the annotated in-context examples most similar to an input sample.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of in-context examples used when none is configured.
pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index from zero vectors")]
    EmptyIndex,
    #[error("vector {id:?} has dimension {got}, expected {expected}")]
    Dimension {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("vector {0:?} has zero norm")]
    ZeroVector(String),
    #[error("vector {0:?} has a non-finite component")]
    NonFinite(String),
    #[error("n must be at least 1")]
    ZeroN,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One feature file line: `{"id": str, "vec": [float]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub vec: Vec<f64>,
}

impl FeatureVector {
    pub fn new(id: impl Into<String>, vec: Vec<f64>) -> Self {
        Self { id: id.into(), vec }
    }
}

fn unit(v: &FeatureVector) -> Result<Vec<f64>, RetrievalError> {
    if v.vec.iter().any(|x| !x.is_finite()) {
        return Err(RetrievalError::NonFinite(v.id.clone()));
    }
    let norm = v.vec.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(RetrievalError::ZeroVector(v.id.clone()));
    }
    Ok(v.vec.iter().map(|x| x / norm).collect())
}

/// Immutable, order-preserving set of unit-normalized vectors.
#[derive(Debug, Clone)]
pub struct ExampleIndex {
    ids: Vec<String>,
    units: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: String,
    pub position: usize,
    pub cosine: f64,
}

impl ExampleIndex {
    pub fn build(vectors: &[FeatureVector]) -> Result<Self, RetrievalError> {
        let dim = vectors.first().ok_or(RetrievalError::EmptyIndex)?.vec.len();
        let mut ids = Vec::with_capacity(vectors.len());
        let mut units = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.vec.len() != dim {
                return Err(RetrievalError::Dimension {
                    id: v.id.clone(),
                    got: v.vec.len(),
                    expected: dim,
                });
            }
            units.push(unit(v)?);
            ids.push(v.id.clone());
        }
        Ok(Self { ids, units, dim })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// The `min(n, len)` most similar entries by descending cosine; equal
    /// cosines keep index order.
    pub fn topn_similar(
        &self,
        query: &FeatureVector,
        n: usize,
    ) -> Result<Vec<Neighbor>, RetrievalError> {
        if n == 0 {
            return Err(RetrievalError::ZeroN);
        }
        if query.vec.len() != self.dim {
            return Err(RetrievalError::Dimension {
                id: query.id.clone(),
                got: query.vec.len(),
                expected: self.dim,
            });
        }
        let q = unit(query)?;
        let mut scored: Vec<(usize, f64)> = self
            .units
            .iter()
            .map(|u| u.iter().zip(&q).map(|(a, b)| a * b).sum())
            .enumerate()
            .collect();
        // stable sort keeps index order among equal cosines
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(n);
        Ok(scored
            .into_iter()
            .map(|(position, cosine)| Neighbor {
                id: self.ids[position].clone(),
                position,
                cosine,
            })
            .collect())
    }
}

pub fn read_features<R: BufRead>(r: R) -> Result<Vec<FeatureVector>, RetrievalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| RetrievalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
