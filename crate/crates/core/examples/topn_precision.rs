//! Top-N precision for detectors that return a ranked list of candidate
//! boxes per entity.
//!
//! ```text
//! cargo run --example topn_precision
//! ```

use std::path::PathBuf;

use gsmner::corpus::{load_dataset, BBox, LoadOptions, SplitName};
use gsmner::scoring::{topn_prec_at, Candidate, CandidateRecord};

fn cand(b: [f64; 4], score: f64) -> Candidate {
    Candidate {
        bbox: BBox::try_from(b).unwrap(),
        score,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/gold.jsonl");
    let split = load_dataset(gold, SplitName::Test, LoadOptions::default())?;

    let mut records = Vec::new();
    for s in split.samples() {
        for e in s.entities.iter().filter(|e| e.is_groundable()) {
            let g = e.boxes[0].to_array();
            let w = f64::from(s.image.width);
            // a confident wrong box, then a shifted copy of the gold box
            let shifted = [g[0], g[1], (g[2] + 2.0).min(w), g[3]];
            records.push(CandidateRecord {
                id: s.id.clone(),
                surface: e.surface.clone(),
                candidates: vec![
                    cand([0.0, 0.0, 1.0, 1.0], 0.9),
                    cand(shifted, 0.6),
                    cand(g, 0.3),
                ],
            });
        }
    }

    for n in 1..=3 {
        let r = topn_prec_at(&split, &records, n, 0.5)?;
        println!(
            "Top-{n} Prec@0.5: {}/{} = {:.2}%",
            r.hits,
            r.total,
            100.0 * r.precision
        );
    }
    Ok(())
}
