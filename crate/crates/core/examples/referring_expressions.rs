//! Entity expansion prompts and the referring expressions sent to the
//! entailment and grounding models.
//!
//! ```text
//! cargo run --example referring_expressions
//! ```

use gsmner::corpus::EntityType;
use gsmner::prompts::{
    build_expansion_prompt, compose_referring_expression, parse_referring_expression, PromptConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PromptConfig::default();
    let sentence = "Federer wins again at Wimbledon";
    let prompt = build_expansion_prompt(
        &cfg.expansion_examples,
        "A tennis player lifts a trophy on a grass court.",
        sentence,
        "Federer",
    )?;
    println!("--- expansion prompt ---\n{prompt}\n------------------------");

    // pretend the LLM answered
    let expr = compose_referring_expression("Federer", EntityType::Per, "Swiss tennis player")?;
    println!("rendered: {}", expr.rendered);
    let bare = compose_referring_expression("Wimbledon", EntityType::Loc, "")?;
    println!("rendered: {}", bare.rendered);

    let back = parse_referring_expression(&expr.rendered)?;
    assert_eq!(back, expr);
    println!(
        "parsed back: entity={:?} type={} expansion={:?}",
        back.entity, back.etype, back.expansion
    );

    if let Err(e) = build_expansion_prompt(&cfg.expansion_examples, "", sentence, "Nadal") {
        println!("rejected: {e}");
    }
    Ok(())
}
