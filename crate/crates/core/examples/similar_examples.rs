//! Pick the most similar annotated examples by cosine and build the
//! knowledge prompt around them.
//!
//! ```text
//! cargo run --example similar_examples
//! ```

use gsmner::prompts::{build_knowledge_prompt, AnnotatedExample, KnowledgeQuery, PromptConfig};
use gsmner::retrieval::{ExampleIndex, FeatureVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = [
        (
            "p1",
            "Messi scores for Barcelona",
            "a footballer celebrating",
            "Messi: PER; Barcelona: ORG",
            [0.9, 0.1, 0.0],
        ),
        (
            "p2",
            "Storm hits Tokyo",
            "a flooded street",
            "Tokyo: LOC",
            [0.0, 0.2, 0.95],
        ),
        (
            "p3",
            "Ronaldo joins Juventus",
            "a player in a striped shirt",
            "Ronaldo: PER; Juventus: ORG",
            [0.8, 0.3, 0.1],
        ),
        (
            "p4",
            "Apple unveils new iPhone",
            "a phone on a stage",
            "Apple: ORG; iPhone: MISC",
            [0.1, 0.9, 0.2],
        ),
    ];
    let vectors: Vec<FeatureVector> = pool
        .iter()
        .map(|(id, .., v)| FeatureVector::new(*id, v.to_vec()))
        .collect();
    let index = ExampleIndex::build(&vectors)?;

    // magnitude does not matter, only direction
    let query = FeatureVector::new("q", vec![17.0, 3.0, 0.5]);
    let hits = index.topn_similar(&query, 2)?;
    for h in &hits {
        println!("{}  cosine {:.4}", h.id, h.cosine);
    }

    let examples: Vec<AnnotatedExample> = hits
        .iter()
        .map(|h| {
            let (id, sentence, desc, ann, _) = pool[h.position];
            AnnotatedExample {
                id: id.into(),
                sentence: sentence.into(),
                image_description: desc.into(),
                annotation: ann.into(),
            }
        })
        .collect();
    let cfg = PromptConfig::default();
    let prompt = build_knowledge_prompt(
        &cfg.knowledge_head,
        &examples,
        &KnowledgeQuery {
            sentence: "Neymar signs with PSG",
            image_description: "a player holding a jersey",
        },
    );
    println!("\n{prompt}");
    Ok(())
}
