//! Inter-annotator agreement over independently annotated copies of a
//! corpus: Fleiss' kappa on entity labels and mean pairwise Dice on masks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{EntityType, GoldEntity, RleMask, Sample};
use crate::metrics::{dice_coefficient, fleiss_kappa, AgreementTable, MetricError};

/// Categories: (type, groundable) pairs plus "no entity".
const N_CATEGORIES: usize = 2 * EntityType::ALL.len() + 1;
const NONE_CATEGORY: usize = N_CATEGORIES - 1;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("need at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("annotator {annotator}: duplicate sample {id:?}")]
    DuplicateSample { annotator: usize, id: String },
    #[error("no annotated entities to compare")]
    NoItems,
    #[error("sample {id:?}, span {start}..{end}: {source}")]
    Mask {
        id: String,
        start: usize,
        end: usize,
        source: MetricError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub annotators: usize,
    pub items: usize,
    /// `None` when every rating fell into one category without perfect agreement.
    pub fleiss_kappa: Option<f64>,
    pub mean_dice: Option<f64>,
    pub dice_pairs: usize,
}

fn category(e: &GoldEntity) -> usize {
    2 * e.etype.index() + usize::from(e.is_groundable())
}

fn union_mask(e: &GoldEntity) -> Result<Option<RleMask>, MetricError> {
    let mut it = e.masks.iter();
    let Some(first) = it.next() else {
        return Ok(None);
    };
    it.try_fold(first.clone(), |acc, m| {
        acc.union(m).map_err(MetricError::from)
    })
    .map(Some)
}

/// Items are the union over annotators of `(sample id, start, end)` spans.
/// Each annotator rates an item with the (type, groundable) category of its
/// entity on that span, or "no entity". Dice is taken between the union
/// masks of every annotator pair that both segmented the item.
pub fn annotation_agreement(annotators: &[Vec<Sample>]) -> Result<AgreementReport, AgreementError> {
    if annotators.len() < 2 {
        return Err(AgreementError::TooFewAnnotators(annotators.len()));
    }
    let mut indexed: Vec<HashMap<(&str, usize, usize), &GoldEntity>> = Vec::new();
    let mut items = BTreeSet::new();
    for (a, samples) in annotators.iter().enumerate() {
        let mut seen = BTreeSet::new();
        let mut map = HashMap::new();
        for s in samples {
            if !seen.insert(s.id.as_str()) {
                return Err(AgreementError::DuplicateSample {
                    annotator: a,
                    id: s.id.clone(),
                });
            }
            for e in &s.entities {
                map.insert((s.id.as_str(), e.start, e.end), e);
                items.insert((s.id.as_str(), e.start, e.end));
            }
        }
        indexed.push(map);
    }
    if items.is_empty() {
        return Err(AgreementError::NoItems);
    }

    let mut rows = Vec::with_capacity(items.len());
    let mut dice_sum = 0.0;
    let mut dice_pairs = 0;
    for key in &items {
        let mut row = vec![0u64; N_CATEGORIES];
        let mut masks = Vec::new();
        for map in &indexed {
            match map.get(key) {
                Some(e) => {
                    row[category(e)] += 1;
                    masks.push(union_mask(e).map_err(|source| mask_err(key, source))?);
                }
                None => row[NONE_CATEGORY] += 1,
            }
        }
        rows.push(row);
        let present: Vec<&RleMask> = masks.iter().flatten().collect();
        for i in 0..present.len() {
            for j in i + 1..present.len() {
                dice_sum += dice_coefficient(present[i], present[j])
                    .map_err(|source| mask_err(key, source))?;
                dice_pairs += 1;
            }
        }
    }

    let table = AgreementTable::new(rows)?;
    let kappa = match fleiss_kappa(&table) {
        Ok(k) => Some(k),
        Err(MetricError::UndefinedKappa(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(AgreementReport {
        annotators: annotators.len(),
        items: items.len(),
        fleiss_kappa: kappa,
        mean_dice: (dice_pairs > 0).then(|| dice_sum / dice_pairs as f64),
        dice_pairs,
    })
}

fn mask_err(key: &(&str, usize, usize), source: MetricError) -> AgreementError {
    AgreementError::Mask {
        id: key.0.to_string(),
        start: key.1,
        end: key.2,
        source,
    }
}

/// Display names of the rating categories by column index.
pub fn category_names() -> BTreeMap<usize, String> {
    let mut out = BTreeMap::new();
    for t in EntityType::ALL {
        out.insert(2 * t.index(), format!("{t}/ungroundable"));
        out.insert(2 * t.index() + 1, format!("{t}/groundable"));
    }
    out.insert(NONE_CATEGORY, "none".into());
    out
}
