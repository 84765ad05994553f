//! Wire types for the JSON-over-HTTP model backend protocol.
//!
//! | endpoint            | request                                   | response                     |
//! |---------------------|-------------------------------------------|------------------------------|
//! | `POST /v1/ve`       | `{"image","expression"}`                  | `{"label":"e"/"c","score"}`  |
//! | `POST /v1/vg`       | `{"image","expression"}`                  | `{"box":[x1,y1,x2,y2],"score"}` |
//! | `POST /v1/segment`  | `{"image","box","width","height"}`        | `{"mask":{"w","h","counts"}}`|
//! | `POST /v1/llm`      | `{"prompt","max_tokens"}`                 | `{"text"}`                   |
//! | `GET /v1/health`    |                                           | `{"status":"ok"}`            |

use serde::{Deserialize, Serialize};

use crate::corpus::RleMask;

pub const VE_PATH: &str = "/v1/ve";
pub const VG_PATH: &str = "/v1/vg";
pub const SEGMENT_PATH: &str = "/v1/segment";
pub const LLM_PATH: &str = "/v1/llm";
pub const HEALTH_PATH: &str = "/v1/health";

/// Entailment verdict: `e` groundable, `c` not groundable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VeLabel {
    #[serde(rename = "e")]
    Entailment,
    #[serde(rename = "c")]
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VeRequest {
    pub image: String,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeResponse {
    pub label: VeLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VgRequest {
    pub image: String,
    pub expression: String,
}

/// The box is left unvalidated here; the caller checks and clamps it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VgResponse {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub image: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmRequest {
    pub prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Ve(VeRequest),
    Vg(VgRequest),
    Segment(SegmentRequest),
    Llm(LlmRequest),
}

impl Request {
    pub fn path(&self) -> &'static str {
        match self {
            Request::Ve(_) => VE_PATH,
            Request::Vg(_) => VG_PATH,
            Request::Segment(_) => SEGMENT_PATH,
            Request::Llm(_) => LLM_PATH,
        }
    }

    pub fn body(&self) -> serde_json::Value {
        let v = match self {
            Request::Ve(r) => serde_json::to_value(r),
            Request::Vg(r) => serde_json::to_value(r),
            Request::Segment(r) => serde_json::to_value(r),
            Request::Llm(r) => serde_json::to_value(r),
        };
        v.expect("request types always serialize")
    }

    /// Parses a request body for the given endpoint path.
    pub fn from_wire(path: &str, body: serde_json::Value) -> Result<Request, String> {
        let err = |e: serde_json::Error| e.to_string();
        match path {
            VE_PATH => serde_json::from_value(body).map(Request::Ve).map_err(err),
            VG_PATH => serde_json::from_value(body).map(Request::Vg).map_err(err),
            SEGMENT_PATH => serde_json::from_value(body)
                .map(Request::Segment)
                .map_err(err),
            LLM_PATH => serde_json::from_value(body).map(Request::Llm).map_err(err),
            other => Err(format!("unknown endpoint {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Ve(VeResponse),
    Vg(VgResponse),
    Segment(SegmentResponse),
    Llm(LlmResponse),
}

impl Response {
    pub fn body(&self) -> serde_json::Value {
        let v = match self {
            Response::Ve(r) => serde_json::to_value(r),
            Response::Vg(r) => serde_json::to_value(r),
            Response::Segment(r) => serde_json::to_value(r),
            Response::Llm(r) => serde_json::to_value(r),
        };
        v.expect("response types always serialize")
    }

    /// Parses a response body for the endpoint that `req` targets.
    pub fn from_wire(req: &Request, body: serde_json::Value) -> Result<Response, String> {
        let err = |e: serde_json::Error| e.to_string();
        match req {
            Request::Ve(_) => serde_json::from_value(body).map(Response::Ve).map_err(err),
            Request::Vg(_) => serde_json::from_value(body).map(Response::Vg).map_err(err),
            Request::Segment(_) => serde_json::from_value(body)
                .map(Response::Segment)
                .map_err(err),
            Request::Llm(_) => serde_json::from_value(body).map(Response::Llm).map_err(err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_shapes() {
        let r = Request::Segment(SegmentRequest {
            image: "a.jpg".into(),
            bbox: [0.0, 0.0, 2.0, 2.0],
            width: 4,
            height: 4,
        });
        assert_eq!(r.path(), "/v1/segment");
        assert_eq!(
            r.body(),
            json!({"image":"a.jpg","box":[0.0,0.0,2.0,2.0],"width":4,"height":4})
        );
        let resp = Response::from_wire(&r, json!({"mask":{"w":4,"h":4,"counts":[16]}})).unwrap();
        assert!(matches!(resp, Response::Segment(_)));
        let ve = Response::from_wire(
            &Request::Ve(VeRequest {
                image: "a".into(),
                expression: "x (PER)".into(),
            }),
            json!({"label":"e","score":0.9}),
        )
        .unwrap();
        assert_eq!(
            ve,
            Response::Ve(VeResponse {
                label: VeLabel::Entailment,
                score: 0.9
            })
        );
    }

    #[test]
    fn schema_violations() {
        assert!(Request::from_wire(VE_PATH, json!({"image":"a"})).is_err());
        assert!(Request::from_wire(VG_PATH, json!({"image":"a","expression":"b","x":1})).is_err());
        assert!(Request::from_wire("/v2/ve", json!({})).is_err());
        let req = Request::Ve(VeRequest {
            image: "a".into(),
            expression: "b".into(),
        });
        assert!(Response::from_wire(&req, json!({"label":"n","score":0.1})).is_err());
        let seg = Request::Segment(SegmentRequest {
            image: "a".into(),
            bbox: [0.0, 0.0, 1.0, 1.0],
            width: 2,
            height: 2,
        });
        // counts do not cover the canvas
        assert!(Response::from_wire(&seg, json!({"mask":{"w":2,"h":2,"counts":[3]}})).is_err());
    }
}
