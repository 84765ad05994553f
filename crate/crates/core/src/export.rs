//! Fine-tuning datasets derived from a gold split: entailment pairs
//! (referring expression, `e`/`c`) and grounding pairs (referring
//! expression, largest gold box).

use serde::{Deserialize, Serialize};

use crate::corpus::{BBox, DatasetSplit, Sample};
use crate::pipeline::{Expansions, VeLabel};
use crate::prompts::{compose_referring_expression, PromptError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeRecord {
    pub id: String,
    pub image: String,
    pub expression: String,
    pub label: VeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VgRecord {
    pub id: String,
    pub image: String,
    pub expression: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

fn expression(
    s: &Sample,
    e: &crate::corpus::GoldEntity,
    expansions: &Expansions,
) -> Result<String, PromptError> {
    let expansion = expansions
        .get(&(s.id.clone(), e.surface.clone()))
        .map_or("", String::as_str);
    Ok(compose_referring_expression(&e.surface, e.etype, expansion)?.rendered)
}

/// One record per gold entity: `e` if it has a box, `c` otherwise.
pub fn ve_dataset(
    split: &DatasetSplit,
    expansions: &Expansions,
) -> Result<Vec<VeRecord>, PromptError> {
    let mut out = Vec::with_capacity(split.entity_count());
    for s in split.samples() {
        for e in &s.entities {
            out.push(VeRecord {
                id: s.id.clone(),
                image: s.image.path.clone(),
                expression: expression(s, e, expansions)?,
                label: if e.is_groundable() {
                    VeLabel::Entailment
                } else {
                    VeLabel::Contradiction
                },
            });
        }
    }
    Ok(out)
}

/// One record per groundable entity, labelled with its largest box.
pub fn vg_dataset(
    split: &DatasetSplit,
    expansions: &Expansions,
) -> Result<Vec<VgRecord>, PromptError> {
    let mut out = Vec::new();
    for s in split.samples() {
        for e in &s.entities {
            if let Some(b) = e.largest_box() {
                out.push(VgRecord {
                    id: s.id.clone(),
                    image: s.image.path.clone(),
                    expression: expression(s, e, expansions)?,
                    bbox: *b,
                });
            }
        }
    }
    Ok(out)
}
