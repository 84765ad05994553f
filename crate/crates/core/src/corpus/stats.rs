use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, EntityType};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub groundable: usize,
    pub ungroundable: usize,
}

/// Corpus counts in the layout of a dataset statistics table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub n_entities: usize,
    pub n_groundable: usize,
    pub n_masks: usize,
    pub per_type: BTreeMap<EntityType, TypeCounts>,
    /// masks in a sample -> number of samples with that many masks
    pub masks_per_image: BTreeMap<usize, usize>,
}

pub fn dataset_stats(split: &DatasetSplit) -> DatasetStats {
    let mut st = DatasetStats::default();
    for t in EntityType::ALL {
        st.per_type.insert(t, TypeCounts::default());
    }
    for s in split.samples() {
        st.n_samples += 1;
        let mut sample_masks = 0;
        for e in &s.entities {
            st.n_entities += 1;
            let counts = st.per_type.entry(e.etype).or_default();
            if e.is_groundable() {
                st.n_groundable += 1;
                counts.groundable += 1;
            } else {
                counts.ungroundable += 1;
            }
            sample_masks += e.masks.len();
        }
        st.n_masks += sample_masks;
        *st.masks_per_image.entry(sample_masks).or_default() += 1;
    }
    st
}
