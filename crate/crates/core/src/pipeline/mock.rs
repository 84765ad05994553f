//! Deterministic stand-in for the model backends.
//!
//! Verdicts and boxes come from a lookup file keyed by `(sample id, entity
//! surface)`. Keys missing from the lookup fall back to fixed rules: label `e`
//! iff the FNV-1a 64 hash of `"{id}|{surface}"` is even, and a centred box
//! covering a quarter of the image. Segmentation fills the box interior.
//! The fallbacks exist for tests and demos only.

use std::collections::HashMap;
use std::hash::Hasher;
use std::io::BufRead;

use async_trait::async_trait;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::*;
use super::{Backend, BackendError};
use crate::corpus::{BBox, RleMask, Sample};
use crate::prompts::parse_referring_expression;

/// Bytes of the prompt echoed by the mock LLM.
const LLM_ECHO_BYTES: usize = 32;

#[derive(Debug, Error)]
pub enum MockError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate lookup key ({id}, {surface})")]
    DuplicateKey { id: String, surface: String },
    #[error("image {0:?} is registered for more than one sample")]
    AmbiguousImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One mock lookup line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub id: String,
    pub surface: String,
    pub label: VeLabel,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone)]
struct ImageInfo {
    sample_id: String,
    width: u32,
    height: u32,
}

/// Lookup table plus the image-reference -> sample table needed to resolve
/// wire requests, which carry only the image reference.
#[derive(Debug, Clone, Default)]
pub struct MockResponder {
    lookup: HashMap<(String, String), LookupEntry>,
    images: HashMap<String, ImageInfo>,
}

pub fn read_lookup<R: BufRead>(r: R) -> Result<Vec<LookupEntry>, MockError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MockError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// FNV-1a 64 of `"{id}|{surface}"`.
pub fn fallback_hash(sample_id: &str, surface: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(format!("{sample_id}|{surface}").as_bytes());
    h.finish()
}

pub fn fallback_label(sample_id: &str, surface: &str) -> VeLabel {
    if fallback_hash(sample_id, surface).is_multiple_of(2) {
        VeLabel::Entailment
    } else {
        VeLabel::Contradiction
    }
}

/// Centred box with half the image width and height.
pub fn fallback_box(width: u32, height: u32) -> [f64; 4] {
    let (w, h) = (f64::from(width), f64::from(height));
    [w / 4.0, h / 4.0, 3.0 * w / 4.0, 3.0 * h / 4.0]
}

fn truncate_at_char_boundary(s: &str, max: usize) -> &str {
    let mut end = max.min(s.len());
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

impl MockResponder {
    pub fn new(entries: Vec<LookupEntry>) -> Result<Self, MockError> {
        let mut lookup = HashMap::new();
        for e in entries {
            let key = (e.id.clone(), e.surface.clone());
            if lookup.insert(key, e.clone()).is_some() {
                return Err(MockError::DuplicateKey {
                    id: e.id,
                    surface: e.surface,
                });
            }
        }
        Ok(Self {
            lookup,
            images: HashMap::new(),
        })
    }

    /// Registers image references so requests can be traced back to samples.
    pub fn with_samples(mut self, samples: &[Sample]) -> Result<Self, MockError> {
        for s in samples {
            let info = ImageInfo {
                sample_id: s.id.clone(),
                width: s.image.width,
                height: s.image.height,
            };
            if let Some(prev) = self.images.insert(s.image.path.clone(), info) {
                if prev.sample_id != s.id {
                    return Err(MockError::AmbiguousImage(s.image.path.clone()));
                }
            }
        }
        Ok(self)
    }

    fn resolve<'a>(
        &'a self,
        image: &'a str,
        expression: &str,
    ) -> Result<(&'a str, String), String> {
        let expr = parse_referring_expression(expression).map_err(|e| e.to_string())?;
        let id = self
            .images
            .get(image)
            .map_or(image, |info| info.sample_id.as_str());
        Ok((id, expr.entity))
    }

    /// Answers one protocol request. Errors are schema or domain violations
    /// of the request.
    pub fn respond(&self, request: &Request) -> Result<Response, String> {
        match request {
            Request::Ve(r) => {
                let (id, surface) = self.resolve(&r.image, &r.expression)?;
                let resp = match self.lookup.get(&(id.to_string(), surface.clone())) {
                    Some(entry) => VeResponse {
                        label: entry.label,
                        score: 1.0,
                    },
                    None => VeResponse {
                        label: fallback_label(id, &surface),
                        score: 0.5,
                    },
                };
                Ok(Response::Ve(resp))
            }
            Request::Vg(r) => {
                let (id, surface) = self.resolve(&r.image, &r.expression)?;
                let entry_box = self
                    .lookup
                    .get(&(id.to_string(), surface))
                    .and_then(|e| e.bbox);
                let resp = match entry_box {
                    Some(b) => VgResponse {
                        bbox: b,
                        score: 1.0,
                    },
                    None => {
                        let info = self.images.get(&r.image).ok_or_else(|| {
                            format!("unknown image {:?}; cannot size fallback box", r.image)
                        })?;
                        VgResponse {
                            bbox: fallback_box(info.width, info.height),
                            score: 0.5,
                        }
                    }
                };
                Ok(Response::Vg(resp))
            }
            Request::Segment(r) => {
                let bbox = BBox::try_from(r.bbox).map_err(|e| e.to_string())?;
                let mask =
                    RleMask::from_box(&bbox, r.width, r.height).map_err(|e| e.to_string())?;
                Ok(Response::Segment(SegmentResponse { mask }))
            }
            Request::Llm(r) => Ok(Response::Llm(LlmResponse {
                text: format!(
                    "MOCK:{}",
                    truncate_at_char_boundary(&r.prompt, LLM_ECHO_BYTES)
                ),
            })),
        }
    }
}

/// Wire-level entry point: parses the body for `path` and answers it.
pub fn mock_respond(
    responder: &MockResponder,
    path: &str,
    body: serde_json::Value,
) -> Result<serde_json::Value, String> {
    let req = Request::from_wire(path, body)?;
    responder.respond(&req).map(|r| r.body())
}

/// In-process backend backed by a [`MockResponder`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    responder: MockResponder,
}

impl MockBackend {
    pub fn new(responder: MockResponder) -> Self {
        Self { responder }
    }

    pub fn responder(&self) -> &MockResponder {
        &self.responder
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn call(&self, request: Request) -> Result<Response, BackendError> {
        self.responder
            .respond(&request)
            .map_err(BackendError::Rejected)
    }
}
