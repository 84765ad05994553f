#![allow(dead_code)]

use std::path::PathBuf;

use gsmner::corpus::{
    BBox, DatasetSplit, EntityType, GoldEntity, ImageRef, RleMask, Sample, SplitName,
};
use gsmner::pipeline::PredictionTriple;
use gsmner::scoring::PredictionRecord;
use rand::Rng;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn golden(name: &str) -> String {
    golden_dir().join(name).display().to_string()
}

pub fn random_box<R: Rng>(rng: &mut R, w: u32, h: u32) -> BBox {
    let x1 = rng.gen_range(0..w);
    let y1 = rng.gen_range(0..h);
    let x2 = rng.gen_range(x1 + 1..=w);
    let y2 = rng.gen_range(y1 + 1..=h);
    BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).unwrap()
}

/// Moves each edge of `b` by up to `max` pixels, staying inside the canvas.
pub fn jitter<R: Rng>(rng: &mut R, b: &BBox, max: i64, w: u32, h: u32) -> BBox {
    loop {
        let mut v = b.to_array().map(|c| c as i64);
        for c in &mut v {
            *c += rng.gen_range(-max..=max);
        }
        v[0] = v[0].clamp(0, w as i64);
        v[2] = v[2].clamp(0, w as i64);
        v[1] = v[1].clamp(0, h as i64);
        v[3] = v[3].clamp(0, h as i64);
        if let Ok(b) = BBox::new(v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64) {
            return b;
        }
    }
}

fn random_type<R: Rng>(rng: &mut R) -> EntityType {
    EntityType::ALL[rng.gen_range(0..4)]
}

/// A corpus with non-overlapping gold spans; about half the entities are
/// groundable, each with one or two boxes and their box-fill masks.
pub fn random_corpus<R: Rng>(rng: &mut R, n_samples: usize, w: u32, h: u32) -> DatasetSplit {
    let mut samples = Vec::new();
    for i in 0..n_samples {
        let n_tok = rng.gen_range(1..=8);
        let tokens: Vec<String> = (0..n_tok).map(|t| format!("w{i}_{t}")).collect();
        let mut entities = Vec::new();
        let mut pos = 0;
        while pos < n_tok {
            if rng.gen_bool(0.5) {
                let len = rng.gen_range(1..=(n_tok - pos).min(3));
                let mut e = GoldEntity {
                    surface: tokens[pos..pos + len].join(" "),
                    start: pos,
                    end: pos + len,
                    etype: random_type(rng),
                    boxes: vec![],
                    masks: vec![],
                };
                if rng.gen_bool(0.5) {
                    for _ in 0..rng.gen_range(1..=2) {
                        let b = random_box(rng, w, h);
                        e.masks.push(RleMask::from_box(&b, w, h).unwrap());
                        e.boxes.push(b);
                    }
                }
                entities.push(e);
                pos += len;
            } else {
                pos += 1;
            }
        }
        samples.push(Sample {
            id: format!("r{i}"),
            tokens,
            image: ImageRef {
                path: format!("r{i}.jpg"),
                width: w,
                height: h,
            },
            caption: None,
            description: None,
            knowledge: None,
            entities,
        });
    }
    DatasetSplit::new(SplitName::Test, samples).unwrap()
}

pub fn triple_from_gold(e: &GoldEntity, w: u32, h: u32) -> PredictionTriple {
    let region = e
        .boxes
        .first()
        .map(|b| (*b, RleMask::from_box(b, w, h).unwrap()));
    PredictionTriple::new(e.surface.clone(), e.start, e.end, e.etype, region)
}

/// Exact copy of the gold: each entity with its first box and first mask.
pub fn gold_as_predictions(split: &DatasetSplit) -> Vec<PredictionRecord> {
    split
        .samples()
        .iter()
        .map(|s| PredictionRecord {
            id: s.id.clone(),
            triples: s
                .entities
                .iter()
                .map(|e| {
                    let region = e.boxes.first().map(|b| (*b, e.masks[0].clone()));
                    PredictionTriple::new(e.surface.clone(), e.start, e.end, e.etype, region)
                })
                .collect(),
        })
        .collect()
}

/// Noisy predictions: dropped entities, wrong types, jittered or missing
/// regions, spurious regions and false positives.
pub fn noisy_predictions<R: Rng>(rng: &mut R, split: &DatasetSplit) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for s in split.samples() {
        let (w, h) = (s.image.width, s.image.height);
        let mut triples = Vec::new();
        for e in &s.entities {
            if rng.gen_bool(0.15) {
                continue;
            }
            let etype = if rng.gen_bool(0.2) {
                random_type(rng)
            } else {
                e.etype
            };
            let region = match e.boxes.first() {
                Some(b) if rng.gen_bool(0.85) => {
                    let pick = &e.boxes[rng.gen_range(0..e.boxes.len())];
                    let nb = if rng.gen_bool(0.3) {
                        *pick
                    } else {
                        jitter(rng, pick, 4, w, h)
                    };
                    let _ = b;
                    Some((nb, RleMask::from_box(&nb, w, h).unwrap()))
                }
                Some(_) => None,
                None if rng.gen_bool(0.2) => {
                    let nb = random_box(rng, w, h);
                    Some((nb, RleMask::from_box(&nb, w, h).unwrap()))
                }
                None => None,
            };
            triples.push(PredictionTriple::new(
                e.surface.clone(),
                e.start,
                e.end,
                etype,
                region,
            ));
        }
        if rng.gen_bool(0.3) {
            let start = rng.gen_range(0..s.tokens.len());
            let region = rng.gen_bool(0.5).then(|| {
                let nb = random_box(rng, w, h);
                (nb, RleMask::from_box(&nb, w, h).unwrap())
            });
            triples.push(PredictionTriple::new(
                s.tokens[start].clone(),
                start,
                start + 1,
                random_type(rng),
                region,
            ));
        }
        out.push(PredictionRecord {
            id: s.id.clone(),
            triples,
        });
    }
    out
}
