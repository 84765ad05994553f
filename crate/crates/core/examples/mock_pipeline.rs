//! The full cascade on the bundled ten-sample corpus with an in-process mock
//! backend: CRF spans, entailment, grounding, segmentation, then scoring.
//!
//! ```text
//! cargo run --example mock_pipeline
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use gsmner::corpus::{load_dataset, LoadOptions, SplitName};
use gsmner::pipeline::{
    read_expansions, read_lookup, run_pipeline, EntitySource, MockBackend, MockResponder,
    PipelineOptions,
};
use gsmner::scoring::{emit_report, score_all, IouRule, ReportFormat};
use gsmner::seqlab::{decode_entities, read_emissions, CrfParamsFile};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden")
        .join(name)
}

fn open(name: &str) -> std::io::Result<BufReader<File>> {
    File::open(fixture(name)).map(BufReader::new)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = load_dataset(
        fixture("gold.jsonl"),
        SplitName::Test,
        LoadOptions::default(),
    )?;

    let emissions = read_emissions(open("emissions.jsonl")?)?;
    let crf: CrfParamsFile = serde_json::from_reader(open("crf.json")?)?;
    let params = crf.into_params()?;
    let mut spans = HashMap::new();
    for s in split.samples() {
        spans.insert(s.id.clone(), decode_entities(&emissions[&s.id], &params)?);
    }

    let expansions = read_expansions(open("expansions.jsonl")?)?;
    let responder =
        MockResponder::new(read_lookup(open("lookup.jsonl")?)?)?.with_samples(split.samples())?;
    let backend = MockBackend::new(responder);

    let run = run_pipeline(
        split.samples(),
        EntitySource::Predicted(&spans),
        &expansions,
        &backend,
        PipelineOptions::default(),
    )
    .await?;
    println!(
        "{} entities used an empty expansion",
        run.missing_expansions
    );

    for rec in run.records.iter().take(3) {
        for t in &rec.triples {
            let region = match (t.bbox(), t.mask()) {
                (Some(b), Some(m)) => format!("box {:?}, mask area {}", b.to_array(), m.area()),
                _ => "ungroundable".into(),
            };
            println!(
                "{:>4} {:<14} {:<5} {region}",
                rec.id,
                t.surface(),
                t.etype()
            );
        }
    }

    let reports = score_all(&split, &run.records, 0.5, IouRule::Gte)?;
    println!("\n{}", emit_report(&reports, ReportFormat::Markdown));
    Ok(())
}
