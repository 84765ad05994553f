//! Canonical data model for grounded / segmented multimodal NER corpora.
//!
//! A [`Sample`] is one image-text pair. Each [`GoldEntity`] carries token
//! offsets, a type, and zero or more boxes and masks. An entity with no
//! boxes (and therefore no masks) is ungroundable; there is no separate flag.

mod load;
mod mask;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_dataset, read_samples, write_samples, CorpusError, LoadOptions};
pub use mask::{rle_decode, rle_encode, Bitmap, MaskError, RleMask};
pub use stats::{dataset_stats, DatasetStats, TypeCounts};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid box [{x1}, {y1}, {x2}, {y2}]: {reason}")]
pub struct BoxError {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub reason: &'static str,
}

/// Axis-aligned box in continuous pixel coordinates, top-left / bottom-right.
///
/// Construction guarantees `0 <= x1 < x2` and `0 <= y1 < y2`, so every box has
/// positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, BoxError> {
        let err = |reason| BoxError {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(err("non-finite coordinate"));
        }
        if x1 < 0.0 || y1 < 0.0 {
            return Err(err("negative coordinate"));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(err("zero or negative extent"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Continuous area, `(x2 - x1) * (y2 - y1)`.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x2 <= f64::from(width) && self.y2 <= f64::from(height)
    }

    /// Clips the box to `[0, width] x [0, height]`. Returns `None` when
    /// nothing of the box remains inside the image.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let (w, h) = (f64::from(width), f64::from(height));
        BBox::new(
            self.x1.min(w),
            self.y1.min(h),
            self.x2.min(w),
            self.y2.min(h),
        )
        .ok()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = BoxError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "MISC")]
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [Self::Per, Self::Loc, Self::Org, Self::Misc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Per => "PER",
            Self::Loc => "LOC",
            Self::Org => "ORG",
            Self::Misc => "MISC",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity type {0:?}")]
pub struct UnknownEntityType(pub String);

impl FromStr for EntityType {
    type Err = UnknownEntityType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownEntityType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: EntityType,
    #[serde(default)]
    pub boxes: Vec<BBox>,
    #[serde(default)]
    pub masks: Vec<RleMask>,
}

impl GoldEntity {
    pub fn is_groundable(&self) -> bool {
        !self.boxes.is_empty()
    }

    /// The box with the largest area, first occurrence on ties.
    pub fn largest_box(&self) -> Option<&BBox> {
        self.boxes
            .iter()
            .fold(None, |best: Option<&BBox>, b| match best {
                Some(cur) if cur.area() >= b.area() => Some(cur),
                _ => Some(b),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub path: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub tokens: Vec<String>,
    pub image: ImageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub entities: Vec<GoldEntity>,
}

impl Sample {
    /// Tokens joined by single spaces.
    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn span_text(&self, start: usize, end: usize) -> Option<String> {
        (start < end && end <= self.tokens.len()).then(|| self.tokens[start..end].join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Dev => "dev",
            Self::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "test" => Ok(Self::Test),
            other => Err(format!(
                "unknown split {other:?} (expected train, dev or test)"
            )),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A loaded split. Samples are only reachable through shared references.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    name: SplitName,
    samples: Vec<Sample>,
}

impl DatasetSplit {
    /// Validates every sample and id uniqueness.
    pub fn new(name: SplitName, samples: Vec<Sample>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, s) in samples.iter().enumerate() {
            let violations = validate_sample(s);
            if !violations.is_empty() {
                return Err(CorpusError::Invalid {
                    line: i + 1,
                    id: s.id.clone(),
                    violations,
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: s.id.clone(),
                });
            }
        }
        Ok(Self { name, samples })
    }

    pub fn name(&self) -> SplitName {
        self.name
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn entity_count(&self) -> usize {
        self.samples.iter().map(|s| s.entities.len()).sum()
    }
}

/// A broken invariant: which field, and which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn violation(field: impl Into<String>, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        rule: rule.into(),
    }
}

/// Checks every sample invariant. An empty result means the sample is valid.
pub fn validate_sample(s: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.id.is_empty() {
        out.push(violation("id", "id must be non-empty"));
    }
    if s.tokens.is_empty() {
        out.push(violation("tokens", "token count must be at least 1"));
    }
    if s.image.width == 0 || s.image.height == 0 {
        out.push(violation("image", "image dimensions must be at least 1x1"));
    }
    let mut seen = HashSet::new();
    for (i, e) in s.entities.iter().enumerate() {
        let field = |f: &str| format!("entities[{i}].{f}");
        match s.span_text(e.start, e.end) {
            None => out.push(violation(field("end"), "entity offset out of range")),
            Some(text) if text != e.surface => out.push(violation(
                field("surface"),
                format!("surface {:?} does not match tokens {:?}", e.surface, text),
            )),
            Some(_) => {}
        }
        if !seen.insert((e.start, e.end, e.etype)) {
            out.push(violation(
                field("start"),
                "duplicate (start, end, type) entity",
            ));
        }
        if e.boxes.is_empty() != e.masks.is_empty() {
            out.push(violation(
                field("boxes"),
                "boxes/masks groundability mismatch",
            ));
        }
        for (j, b) in e.boxes.iter().enumerate() {
            if !b.fits_within(s.image.width, s.image.height) {
                out.push(violation(
                    format!("entities[{i}].boxes[{j}]"),
                    "box exceeds image bounds",
                ));
            }
        }
        for (j, m) in e.masks.iter().enumerate() {
            let f = format!("entities[{i}].masks[{j}]");
            if m.width() != s.image.width || m.height() != s.image.height {
                out.push(violation(f, "mask dimensions differ from image"));
            } else if m.is_empty() {
                out.push(violation(f, "mask has no set pixels"));
            }
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    const TOKENS: [&str; 3] = ["Messi", "in", "Paris"];

    #[test]
    fn valid_sample_has_no_violations() {
        let e = ground(
            entity(&TOKENS, 0, 1, EntityType::Per),
            [0.0, 0.0, 2.0, 2.0],
            4,
            4,
        );
        let s = sample(
            "a",
            &TOKENS,
            vec![e, entity(&TOKENS, 2, 3, EntityType::Loc)],
        );
        assert_eq!(validate_sample(&s), vec![]);
    }

    #[test]
    fn offset_out_of_range() {
        let mut e = entity(&TOKENS, 2, 3, EntityType::Loc);
        e.end = 4;
        let v = validate_sample(&sample("a", &TOKENS, vec![e]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "entity offset out of range");
    }

    #[test]
    fn box_without_mask() {
        let mut e = entity(&TOKENS, 0, 1, EntityType::Per);
        e.boxes.push(BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        let v = validate_sample(&sample("a", &TOKENS, vec![e]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "boxes/masks groundability mismatch");
    }

    #[test]
    fn box_outside_image_and_wrong_mask_size() {
        let mut e = entity(&TOKENS, 0, 1, EntityType::Per);
        e.boxes.push(BBox::new(0.0, 0.0, 5.0, 1.0).unwrap());
        e.masks.push(RleMask::new(3, 3, vec![0, 9]).unwrap());
        let rules: Vec<_> = validate_sample(&sample("a", &TOKENS, vec![e]))
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert_eq!(
            rules,
            vec![
                "box exceeds image bounds",
                "mask dimensions differ from image"
            ]
        );
    }

    #[test]
    fn surface_mismatch_and_empty_tokens() {
        let mut e = entity(&TOKENS, 0, 1, EntityType::Per);
        e.surface = "Ronaldo".into();
        assert_eq!(validate_sample(&sample("a", &TOKENS, vec![e])).len(), 1);
        let v = validate_sample(&sample("b", &[], vec![]));
        assert_eq!(v[0].field, "tokens");
    }

    #[test]
    fn bbox_rejects_degenerate() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 2.0).is_err());
        assert_eq!(BBox::new(0.0, 0.0, 2.0, 3.0).unwrap().area(), 6.0);
    }

    #[test]
    fn clamp_and_largest_box() {
        let b = BBox::new(50.0, 10.0, 150.0, 40.0).unwrap();
        assert_eq!(
            b.clamp_to(100, 100).unwrap().to_array(),
            [50.0, 10.0, 100.0, 40.0]
        );
        assert!(BBox::new(120.0, 0.0, 130.0, 5.0)
            .unwrap()
            .clamp_to(100, 100)
            .is_none());

        let mut e = entity(&TOKENS, 0, 1, EntityType::Per);
        e.boxes = vec![
            BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            BBox::new(0.0, 0.0, 20.0, 20.0).unwrap(),
            BBox::new(5.0, 5.0, 25.0, 25.0).unwrap(),
        ];
        assert_eq!(e.largest_box().unwrap().to_array(), [0.0, 0.0, 20.0, 20.0]);
    }

    #[test]
    fn entity_type_round_trip() {
        for t in EntityType::ALL {
            assert_eq!(t.as_str().parse::<EntityType>().unwrap(), t);
        }
        assert!("PERSON".parse::<EntityType>().is_err());
    }
}
