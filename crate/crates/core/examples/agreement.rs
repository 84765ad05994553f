//! Agreement between two annotators: Fleiss' kappa over entity categories
//! and mean Dice over the masks both of them drew.
//!
//! ```text
//! cargo run --example agreement
//! ```

use gsmner::agreement::{annotation_agreement, category_names};
use gsmner::corpus::{BBox, EntityType, GoldEntity, ImageRef, RleMask, Sample};

fn entity(tokens: &[&str], start: usize, etype: EntityType, b: Option<[f64; 4]>) -> GoldEntity {
    let (boxes, masks) = match b {
        Some(b) => {
            let b = BBox::try_from(b).unwrap();
            (vec![b], vec![RleMask::from_box(&b, 16, 16).unwrap()])
        }
        None => (vec![], vec![]),
    };
    GoldEntity {
        surface: tokens[start].to_string(),
        start,
        end: start + 1,
        etype,
        boxes,
        masks,
    }
}

fn sample(id: &str, tokens: &[&str], entities: Vec<GoldEntity>) -> Sample {
    Sample {
        id: id.into(),
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        image: ImageRef {
            path: format!("{id}.jpg"),
            width: 16,
            height: 16,
        },
        caption: None,
        description: None,
        knowledge: None,
        entities,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t1 = ["Ann", "visits", "Rome"];
    let t2 = ["Google", "hires", "Bob"];
    let alice = vec![
        sample(
            "a",
            &t1,
            vec![
                entity(&t1, 0, EntityType::Per, Some([0.0, 0.0, 8.0, 8.0])),
                entity(&t1, 2, EntityType::Loc, None),
            ],
        ),
        sample(
            "b",
            &t2,
            vec![
                entity(&t2, 0, EntityType::Org, None),
                entity(&t2, 2, EntityType::Per, Some([4.0, 4.0, 12.0, 16.0])),
            ],
        ),
    ];
    let bob = vec![
        sample(
            "a",
            &t1,
            vec![
                entity(&t1, 0, EntityType::Per, Some([1.0, 0.0, 8.0, 9.0])),
                entity(&t1, 2, EntityType::Loc, None),
            ],
        ),
        // disagrees on the type of "Google" and misses "Bob"
        sample("b", &t2, vec![entity(&t2, 0, EntityType::Misc, None)]),
    ];
    let r = annotation_agreement(&[alice, bob])?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    println!(
        "rating categories: {:?}",
        category_names().values().collect::<Vec<_>>()
    );
    Ok(())
}
