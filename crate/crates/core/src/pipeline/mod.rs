//! The grounding cascade: referring expression, entailment verdict, visual
//! grounding, then box-prompted segmentation, run against pluggable model
//! backends.

mod http;
mod mock;
pub mod protocol;
mod runner;
mod server;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BBox, EntityType, ImageRef, RleMask, Sample};
use crate::prompts::ReferringExpression;
use protocol::*;

pub use http::HttpBackend;
pub use mock::{
    fallback_box, fallback_hash, fallback_label, mock_respond, read_lookup, LookupEntry,
    MockBackend, MockError, MockResponder,
};
pub use protocol::VeLabel;
pub use runner::{
    read_expansions, run_pipeline, EntityFailure, EntitySource, ExpansionRecord, Expansions,
    PipelineError, PipelineOptions, PipelineRun, SampleFailure,
};
pub use server::{mock_router, spawn_mock_server, MockServer};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Schema(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("invalid backend output: {0}")]
    Invalid(String),
}

/// A model backend speaking the wire protocol in [`protocol`].
#[async_trait]
pub trait Backend: Send + Sync {
    async fn call(&self, request: Request) -> Result<Response, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum BackendTarget {
    Mock,
    Url(String),
}

impl From<String> for BackendTarget {
    fn from(s: String) -> Self {
        if s == "mock" {
            BackendTarget::Mock
        } else {
            BackendTarget::Url(s)
        }
    }
}

impl From<BackendTarget> for String {
    fn from(t: BackendTarget) -> String {
        match t {
            BackendTarget::Mock => "mock".into(),
            BackendTarget::Url(u) => u,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("max in-flight must be at least 1")]
    ZeroInFlight,
    #[error("mock lookup {path}: {source}")]
    Lookup { path: PathBuf, source: MockError },
    #[error("http client: {0}")]
    Client(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub target: BackendTarget,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retries: u32,
    pub mock_lookup: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            target: BackendTarget::Mock,
            timeout_ms: 30_000,
            max_in_flight: 8,
            retries: 2,
            mock_lookup: None,
        }
    }
}

impl BackendConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.timeout_ms == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::ZeroInFlight);
        }
        Ok(())
    }

    /// Builds the backend. `samples` registers image references with the
    /// mock so it can map requests back to sample ids.
    pub fn connect(&self, samples: &[Sample]) -> Result<Arc<dyn Backend>, ConfigError> {
        self.check()?;
        match &self.target {
            BackendTarget::Mock => {
                let entries = match &self.mock_lookup {
                    Some(path) => {
                        let lookup_err = |source| ConfigError::Lookup {
                            path: path.clone(),
                            source,
                        };
                        let f = std::fs::File::open(path).map_err(|e| lookup_err(e.into()))?;
                        read_lookup(std::io::BufReader::new(f)).map_err(lookup_err)?
                    }
                    None => Vec::new(),
                };
                let lookup_err = |source| ConfigError::Lookup {
                    path: self.mock_lookup.clone().unwrap_or_default(),
                    source,
                };
                let responder = MockResponder::new(entries)
                    .map_err(lookup_err)?
                    .with_samples(samples)
                    .map_err(lookup_err)?;
                Ok(Arc::new(MockBackend::new(responder)))
            }
            BackendTarget::Url(url) => Ok(Arc::new(HttpBackend::new(
                url,
                Duration::from_millis(self.timeout_ms),
                self.retries,
            )?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VeVerdict {
    pub label: VeLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Error)]
#[error("a triple must carry both a box and a mask, or neither")]
pub struct RegionMismatch;

/// One predicted entity with its optional region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTriple", into = "RawTriple")]
pub struct PredictionTriple {
    surface: String,
    start: usize,
    end: usize,
    etype: EntityType,
    region: Option<(BBox, RleMask)>,
}

#[derive(Serialize, Deserialize)]
struct RawTriple {
    surface: String,
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    etype: EntityType,
    #[serde(rename = "box")]
    bbox: Option<BBox>,
    mask: Option<RleMask>,
}

impl TryFrom<RawTriple> for PredictionTriple {
    type Error = RegionMismatch;

    fn try_from(r: RawTriple) -> Result<Self, RegionMismatch> {
        let region = match (r.bbox, r.mask) {
            (Some(b), Some(m)) => Some((b, m)),
            (None, None) => None,
            _ => return Err(RegionMismatch),
        };
        Ok(Self {
            surface: r.surface,
            start: r.start,
            end: r.end,
            etype: r.etype,
            region,
        })
    }
}

impl From<PredictionTriple> for RawTriple {
    fn from(t: PredictionTriple) -> Self {
        let (bbox, mask) = t.region.map_or((None, None), |(b, m)| (Some(b), Some(m)));
        Self {
            surface: t.surface,
            start: t.start,
            end: t.end,
            etype: t.etype,
            bbox,
            mask,
        }
    }
}

impl PredictionTriple {
    pub fn new(
        surface: impl Into<String>,
        start: usize,
        end: usize,
        etype: EntityType,
        region: Option<(BBox, RleMask)>,
    ) -> Self {
        Self {
            surface: surface.into(),
            start,
            end,
            etype,
            region,
        }
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn etype(&self) -> EntityType {
        self.etype
    }

    pub fn bbox(&self) -> Option<&BBox> {
        self.region.as_ref().map(|(b, _)| b)
    }

    pub fn mask(&self) -> Option<&RleMask> {
        self.region.as_ref().map(|(_, m)| m)
    }

    pub fn is_grounded(&self) -> bool {
        self.region.is_some()
    }
}

pub async fn ve_classify(
    backend: &dyn Backend,
    image: &ImageRef,
    expr: &ReferringExpression,
) -> Result<VeVerdict, BackendError> {
    if expr.rendered.trim().is_empty() {
        return Err(BackendError::Rejected("empty referring expression".into()));
    }
    let req = Request::Ve(VeRequest {
        image: image.path.clone(),
        expression: expr.rendered.clone(),
    });
    match backend.call(req).await? {
        Response::Ve(r) if (0.0..=1.0).contains(&r.score) => Ok(VeVerdict {
            label: r.label,
            score: r.score,
        }),
        Response::Ve(r) => Err(BackendError::Schema(format!(
            "score {} outside [0, 1]",
            r.score
        ))),
        other => Err(wrong_kind("ve", &other)),
    }
}

/// Grounds the expression and clamps the returned box to the image.
pub async fn vg_ground(
    backend: &dyn Backend,
    image: &ImageRef,
    expr: &ReferringExpression,
) -> Result<GroundingResult, BackendError> {
    let req = Request::Vg(VgRequest {
        image: image.path.clone(),
        expression: expr.rendered.clone(),
    });
    match backend.call(req).await? {
        Response::Vg(r) => {
            if r.bbox.iter().any(|v| !v.is_finite()) {
                return Err(BackendError::Invalid(format!(
                    "box {:?}: non-finite coordinate",
                    r.bbox
                )));
            }
            let (w, h) = (f64::from(image.width), f64::from(image.height));
            let [x1, y1, x2, y2] = r.bbox;
            let clamped = BBox::new(
                x1.clamp(0.0, w),
                y1.clamp(0.0, h),
                x2.clamp(0.0, w),
                y2.clamp(0.0, h),
            )
            .map_err(|_| {
                BackendError::Invalid(format!(
                    "box {:?} is empty inside the {}x{} image",
                    r.bbox, image.width, image.height
                ))
            })?;
            Ok(GroundingResult {
                bbox: clamped,
                score: r.score,
            })
        }
        other => Err(wrong_kind("vg", &other)),
    }
}

pub async fn segment_from_box(
    backend: &dyn Backend,
    image: &ImageRef,
    bbox: &BBox,
) -> Result<RleMask, BackendError> {
    let req = Request::Segment(SegmentRequest {
        image: image.path.clone(),
        bbox: bbox.to_array(),
        width: image.width,
        height: image.height,
    });
    match backend.call(req).await? {
        Response::Segment(r) => {
            if r.mask.width() != image.width || r.mask.height() != image.height {
                return Err(BackendError::Invalid(format!(
                    "mask is {}x{}, image is {}x{}",
                    r.mask.width(),
                    r.mask.height(),
                    image.width,
                    image.height
                )));
            }
            Ok(r.mask)
        }
        other => Err(wrong_kind("segment", &other)),
    }
}

pub async fn llm_generate(
    backend: &dyn Backend,
    prompt: &str,
    max_tokens: u32,
) -> Result<String, BackendError> {
    let req = Request::Llm(LlmRequest {
        prompt: prompt.to_string(),
        max_tokens,
    });
    match backend.call(req).await? {
        Response::Llm(r) => Ok(r.text),
        other => Err(wrong_kind("llm", &other)),
    }
}

fn wrong_kind(expected: &str, got: &Response) -> BackendError {
    BackendError::Schema(format!("expected a {expected} response, got {got:?}"))
}
