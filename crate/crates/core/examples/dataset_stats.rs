//! Corpus statistics and the two fine-tuning exports for a gold split.
//!
//! ```text
//! cargo run --example dataset_stats [-- path/to/split.jsonl]
//! ```

use std::path::PathBuf;

use gsmner::corpus::{dataset_stats, load_dataset, LoadOptions, SplitName};
use gsmner::export::{ve_dataset, vg_dataset};
use gsmner::pipeline::{Expansions, VeLabel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/gold.jsonl")
        });
    let split = load_dataset(&path, SplitName::Train, LoadOptions::default())?;
    let st = dataset_stats(&split);
    println!(
        "{}: {} samples, {} entities, {} groundable, {} masks",
        path.display(),
        st.n_samples,
        st.n_entities,
        st.n_groundable,
        st.n_masks
    );
    for (t, c) in &st.per_type {
        println!(
            "  {:<4} groundable {:>3}  ungroundable {:>3}",
            t.as_str(),
            c.groundable,
            c.ungroundable
        );
    }
    println!("  masks per image: {:?}", st.masks_per_image);

    let ve = ve_dataset(&split, &Expansions::new())?;
    let pos = ve.iter().filter(|r| r.label == VeLabel::Entailment).count();
    println!("VE pairs: {} ({} e / {} c)", ve.len(), pos, ve.len() - pos);
    let vg = vg_dataset(&split, &Expansions::new())?;
    println!("VG pairs: {}", vg.len());
    if let Some(r) = vg.first() {
        println!("  first: {}", serde_json::to_string(r)?);
    }
    Ok(())
}
