//! How GMNER and SMNER scores move as the IoU threshold rises, and the
//! effect of the strict vs inclusive comparison at the boundary.
//!
//! ```text
//! cargo run --example iou_sweep
//! ```

use gsmner::corpus::{
    BBox, DatasetSplit, EntityType, GoldEntity, ImageRef, RleMask, Sample, SplitName,
};
use gsmner::pipeline::PredictionTriple;
use gsmner::scoring::{emit_report, iou_sweep, IouRule, PredictionRecord, ReportFormat, Task};

const W: u32 = 20;
const H: u32 = 20;

fn boxed(b: [f64; 4]) -> (BBox, RleMask) {
    let b = BBox::try_from(b).unwrap();
    (b, RleMask::from_box(&b, W, H).unwrap())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold_box = [0.0, 0.0, 10.0, 10.0];
    // predicted boxes with IoU 1.0, 0.81, 0.64, 0.5 and 0.25 against the gold box
    let preds = [
        [0.0, 0.0, 10.0, 10.0],
        [0.0, 0.0, 10.0, 8.1],
        [0.0, 0.0, 8.0, 8.0],
        [0.0, 0.0, 10.0, 5.0],
        [0.0, 0.0, 5.0, 5.0],
    ];
    let mut samples = Vec::new();
    let mut records = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        let (gb, gm) = boxed(gold_box);
        let id = format!("x{i}");
        samples.push(Sample {
            id: id.clone(),
            tokens: vec!["Ann".into()],
            image: ImageRef {
                path: format!("{id}.jpg"),
                width: W,
                height: H,
            },
            caption: None,
            description: None,
            knowledge: None,
            entities: vec![GoldEntity {
                surface: "Ann".into(),
                start: 0,
                end: 1,
                etype: EntityType::Per,
                boxes: vec![gb],
                masks: vec![gm],
            }],
        });
        records.push(PredictionRecord {
            id,
            triples: vec![PredictionTriple::new(
                "Ann",
                0,
                1,
                EntityType::Per,
                Some(boxed(*p)),
            )],
        });
    }
    let split = DatasetSplit::new(SplitName::Test, samples)?;
    let thresholds: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();

    for rule in [IouRule::Gte, IouRule::Gt] {
        let reports = iou_sweep(&split, &records, Task::Gmner, rule, &thresholds)?;
        println!("GMNER, IoU {} threshold", rule.as_str());
        println!("{}", emit_report(&reports, ReportFormat::Markdown));
    }
    let smner = iou_sweep(&split, &records, Task::Smner, IouRule::Gte, &[0.5])?;
    println!("SMNER at 0.5: F1 {:.3}", smner[0].f1);
    Ok(())
}
