//! Drive the cascade through the HTTP client. A mock server stands in for the
//! model gateway; point `HttpBackend` at a real one the same way.
//!
//! ```text
//! cargo run --example http_backend
//! ```

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use gsmner::corpus::{EntityType, GoldEntity, ImageRef, Sample};
use gsmner::pipeline::{
    run_pipeline, spawn_mock_server, EntitySource, Expansions, HttpBackend, LookupEntry,
    MockResponder, PipelineOptions, VeLabel,
};

fn sample() -> Sample {
    let tokens: Vec<String> = ["Nadal", "trains", "in", "Mallorca"]
        .map(String::from)
        .to_vec();
    let entity = |start: usize, etype| GoldEntity {
        surface: tokens[start].clone(),
        start,
        end: start + 1,
        etype,
        boxes: vec![],
        masks: vec![],
    };
    Sample {
        id: "t1".into(),
        image: ImageRef {
            path: "t1.jpg".into(),
            width: 64,
            height: 48,
        },
        caption: None,
        description: None,
        knowledge: None,
        entities: vec![entity(0, EntityType::Per), entity(3, EntityType::Loc)],
        tokens,
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = vec![sample()];
    let lookup = vec![
        LookupEntry {
            id: "t1".into(),
            surface: "Nadal".into(),
            label: VeLabel::Entailment,
            bbox: Some([8.0, 4.0, 40.0, 44.0]),
        },
        LookupEntry {
            id: "t1".into(),
            surface: "Mallorca".into(),
            label: VeLabel::Contradiction,
            bbox: None,
        },
    ];
    let responder = MockResponder::new(lookup)?.with_samples(&samples)?;
    let server =
        spawn_mock_server(Arc::new(responder), SocketAddr::from(([127, 0, 0, 1], 0))).await?;
    println!("mock backend at {}", server.url());

    let client = HttpBackend::new(&server.url(), Duration::from_secs(5), 2)?;
    println!("health: {:?}", client.health().await?);

    let mut expansions = Expansions::new();
    expansions.insert(
        ("t1".into(), "Nadal".into()),
        "Spanish tennis player".into(),
    );
    let run = run_pipeline(
        &samples,
        EntitySource::Gold,
        &expansions,
        &client,
        PipelineOptions::default(),
    )
    .await?;
    for t in &run.records[0].triples {
        println!(
            "{:<9} grounded={} box={:?}",
            t.surface(),
            t.is_grounded(),
            t.bbox().map(|b| b.to_array())
        );
    }
    Ok(())
}
