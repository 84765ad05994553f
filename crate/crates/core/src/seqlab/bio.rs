//! BIO tagging over the four entity types.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SeqError;
use crate::corpus::EntityType;

/// One BIO label. Index order is `O, B-PER, I-PER, B-LOC, I-LOC, B-ORG,
/// I-ORG, B-MISC, I-MISC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    O,
    B(EntityType),
    I(EntityType),
}

impl Label {
    pub fn index(&self) -> usize {
        match self {
            Label::O => 0,
            Label::B(t) => 1 + 2 * t.index(),
            Label::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        if i == 0 {
            return Some(Label::O);
        }
        let t = *EntityType::ALL.get((i - 1) / 2)?;
        Some(if i % 2 == 1 { Label::B(t) } else { Label::I(t) })
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::O => f.write_str("O"),
            Label::B(t) => write!(f, "B-{t}"),
            Label::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Label {
    type Err = SeqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeqError::UnknownLabel(s.to_string());
        if s == "O" {
            return Ok(Label::O);
        }
        let (prefix, ty) = s.split_once('-').ok_or_else(bad)?;
        let t: EntityType = ty.parse().map_err(|_| bad())?;
        match prefix {
            "B" => Ok(Label::B(t)),
            "I" => Ok(Label::I(t)),
            _ => Err(bad()),
        }
    }
}

/// The fixed 9-label BIO alphabet.
pub struct LabelScheme;

impl LabelScheme {
    pub const SIZE: usize = 9;

    pub fn labels() -> impl Iterator<Item = Label> {
        (0..Self::SIZE).map(|i| Label::from_index(i).expect("in range"))
    }

    pub fn names() -> Vec<String> {
        Self::labels().map(|l| l.to_string()).collect()
    }
}

/// A labelled token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSequence(Vec<Label>);

impl TagSequence {
    pub fn new(labels: Vec<Label>) -> Result<Self, SeqError> {
        if labels.is_empty() {
            return Err(SeqError::EmptySequence);
        }
        Ok(Self(labels))
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self, SeqError> {
        let labels = indices
            .iter()
            .map(|&i| Label::from_index(i).ok_or(SeqError::LabelOutOfRange(i, LabelScheme::SIZE)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(labels)
    }

    pub fn parse(tags: &[&str]) -> Result<Self, SeqError> {
        Self::new(tags.iter().map(|t| t.parse()).collect::<Result<_, _>>()?)
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(Label::index).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: EntityType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioViolation {
    pub position: usize,
    pub label: Label,
}

impl fmt::Display for BioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "orphan {} at position {}", self.label, self.position)
    }
}

/// In strict mode every `I-T` must follow `B-T` or `I-T`; lenient mode
/// rewrites orphan `I-T` labels to `B-T`.
pub fn validate_bio(tags: &TagSequence, mode: BioMode) -> Result<TagSequence, Vec<BioViolation>> {
    let mut out = tags.0.clone();
    let mut violations = Vec::new();
    let mut prev = Label::O;
    for (position, label) in out.iter_mut().enumerate() {
        if let Label::I(t) = *label {
            let continues = matches!(prev, Label::B(p) | Label::I(p) if p == t);
            if !continues {
                match mode {
                    BioMode::Strict => violations.push(BioViolation {
                        position,
                        label: *label,
                    }),
                    BioMode::Lenient => *label = Label::B(t),
                }
            }
        }
        prev = *label;
    }
    if violations.is_empty() {
        Ok(TagSequence(out))
    } else {
        Err(violations)
    }
}

/// Maximal `B-T (I-T)*` runs, in order of start offset.
pub fn spans_from_bio(tags: &TagSequence) -> Result<Vec<EntitySpan>, SeqError> {
    validate_bio(tags, BioMode::Strict).map_err(SeqError::InvalidBio)?;
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, label) in tags.0.iter().enumerate() {
        match *label {
            Label::I(_) => {
                if let Some(span) = open.as_mut() {
                    span.end = i + 1;
                }
            }
            other => {
                spans.extend(open.take());
                if let Label::B(t) = other {
                    open = Some(EntitySpan {
                        start: i,
                        end: i + 1,
                        etype: t,
                    });
                }
            }
        }
    }
    spans.extend(open);
    Ok(spans)
}

pub fn bio_from_spans(spans: &[EntitySpan], length: usize) -> Result<TagSequence, SeqError> {
    let mut labels = vec![Label::O; length];
    let mut sorted = spans.to_vec();
    sorted.sort();
    for (k, s) in sorted.iter().enumerate() {
        if s.start >= s.end || s.end > length {
            return Err(SeqError::SpanOutOfRange {
                start: s.start,
                end: s.end,
                length,
            });
        }
        if k > 0 && sorted[k - 1].end > s.start {
            return Err(SeqError::OverlappingSpans(sorted[k - 1], *s));
        }
        labels[s.start] = Label::B(s.etype);
        for l in &mut labels[s.start + 1..s.end] {
            *l = Label::I(s.etype);
        }
    }
    TagSequence::new(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use EntityType::*;

    fn tags(s: &[&str]) -> TagSequence {
        TagSequence::parse(s).unwrap()
    }

    #[test]
    fn label_index_bijection() {
        let names = LabelScheme::names();
        assert_eq!(
            names,
            ["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC"]
        );
        for (i, l) in LabelScheme::labels().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert_eq!(Label::from_index(9), None);
        assert!("B-FOO".parse::<Label>().is_err());
        assert!("X-PER".parse::<Label>().is_err());
    }

    #[test]
    fn validate_examples() {
        let ooo = tags(&["O", "O", "O"]);
        assert_eq!(validate_bio(&ooo, BioMode::Strict).unwrap(), ooo);

        let err = validate_bio(&tags(&["I-PER", "O"]), BioMode::Strict).unwrap_err();
        assert_eq!(
            err,
            vec![BioViolation {
                position: 0,
                label: Label::I(Per)
            }]
        );

        let fixed = validate_bio(&tags(&["I-PER", "I-PER"]), BioMode::Lenient).unwrap();
        assert_eq!(fixed, tags(&["B-PER", "I-PER"]));

        // type switch inside a run is an orphan too
        let err = validate_bio(&tags(&["B-PER", "I-LOC"]), BioMode::Strict).unwrap_err();
        assert_eq!(err[0].position, 1);
    }

    #[test]
    fn spans_examples() {
        assert_eq!(spans_from_bio(&tags(&["O", "O", "O"])).unwrap(), vec![]);
        assert_eq!(
            spans_from_bio(&tags(&["B-PER", "I-PER", "O", "B-LOC"])).unwrap(),
            vec![
                EntitySpan {
                    start: 0,
                    end: 2,
                    etype: Per
                },
                EntitySpan {
                    start: 3,
                    end: 4,
                    etype: Loc
                },
            ]
        );
        // adjacent B starts a new span
        assert_eq!(spans_from_bio(&tags(&["B-ORG", "B-ORG"])).unwrap().len(), 2);
        assert!(matches!(
            spans_from_bio(&tags(&["O", "I-MISC"])),
            Err(SeqError::InvalidBio(_))
        ));
    }

    #[test]
    fn bio_from_spans_examples() {
        assert_eq!(bio_from_spans(&[], 3).unwrap(), tags(&["O", "O", "O"]));
        let one = [EntitySpan {
            start: 0,
            end: 1,
            etype: Org,
        }];
        assert_eq!(bio_from_spans(&one, 2).unwrap(), tags(&["B-ORG", "O"]));
        let overlap = [
            EntitySpan {
                start: 0,
                end: 2,
                etype: Per,
            },
            EntitySpan {
                start: 1,
                end: 3,
                etype: Per,
            },
        ];
        assert!(matches!(
            bio_from_spans(&overlap, 3),
            Err(SeqError::OverlappingSpans(..))
        ));
        let outside = [EntitySpan {
            start: 2,
            end: 4,
            etype: Per,
        }];
        assert!(matches!(
            bio_from_spans(&outside, 3),
            Err(SeqError::SpanOutOfRange { .. })
        ));
    }

    fn valid_sequence() -> impl Strategy<Value = TagSequence> {
        proptest::collection::vec(0usize..9, 1..24).prop_map(|raw| {
            let labels = raw
                .into_iter()
                .map(|i| Label::from_index(i).unwrap())
                .collect();
            validate_bio(&TagSequence(labels), BioMode::Lenient).unwrap()
        })
    }

    proptest! {
        #[test]
        fn bio_round_trip(t in valid_sequence()) {
            let spans = spans_from_bio(&t).unwrap();
            prop_assert_eq!(bio_from_spans(&spans, t.len()).unwrap(), t);
        }

        #[test]
        fn spans_round_trip(t in valid_sequence()) {
            let spans = spans_from_bio(&t).unwrap();
            let again = spans_from_bio(&bio_from_spans(&spans, t.len()).unwrap()).unwrap();
            prop_assert_eq!(again, spans);
        }
    }
}
