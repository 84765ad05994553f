//! Linear-chain CRF decoding over the nine BIO labels.
//!
//! ```text
//! cargo run --example crf_decode
//! ```

use gsmner::seqlab::{
    crf_nll_and_grad, decode_entities, log_partition, viterbi_decode, CrfParams, EmissionMatrix,
    LabelScheme, TagSequence,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tokens = ["Taylor", "Swift", "sings", "in", "London"];
    let names = LabelScheme::names();
    let l = names.len();
    let idx = |name: &str| names.iter().position(|n| n == name).unwrap();

    let mut e = EmissionMatrix::zeros(tokens.len(), l);
    for (i, j) in [(0, "B-PER"), (1, "I-PER"), (2, "O"), (3, "O"), (4, "B-LOC")] {
        e.set(i, idx(j), 2.0);
    }
    // "Swift" alone looks slightly more like a location
    e.set(1, idx("B-LOC"), 2.3);

    let mut p = CrfParams::zeros(l);
    p.transition[idx("B-PER")][idx("I-PER")] = 1.0;

    let (path, score) = viterbi_decode(&e, &p)?;
    let tags = TagSequence::from_indices(&path)?;
    for (tok, label) in tokens.iter().zip(tags.labels()) {
        println!("{tok:>8}  {label}");
    }
    println!(
        "best path score {score:.3}, log Z {:.3}",
        log_partition(&e, &p)?
    );

    for span in decode_entities(&e, &p)? {
        println!(
            "entity {:?} [{}..{}) {}",
            tokens[span.start..span.end].join(" "),
            span.start,
            span.end,
            span.etype
        );
    }

    let (nll, grad) = crf_nll_and_grad(&e, &p, &path)?;
    println!(
        "NLL of the decoded path {nll:.4}; d/d transition[B-PER][I-PER] = {:.4}",
        grad.params.transition[idx("B-PER")][idx("I-PER")]
    );
    Ok(())
}
