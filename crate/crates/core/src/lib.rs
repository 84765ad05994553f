//! Grounded and segmented multimodal named entity recognition toolkit.
//!
//! The crate covers the whole evaluation side of the task family
//! (MNER, GMNER, SMNER and the type-agnostic EEG / EES variants):
//!
//! - [`corpus`]: the sample data model, JSONL loading and the RLE mask codec
//! - [`metrics`]: box / mask IoU, Dice, Fleiss' kappa
//! - [`seqlab`]: BIO codec and linear-chain CRF decoding
//! - [`retrieval`]: top-N cosine selection of in-context examples
//! - [`prompts`]: LLM prompt templates and referring expressions
//! - [`pipeline`]: the entailment -> grounding -> segmentation cascade over
//!   pluggable HTTP or mock backends
//! - [`scoring`]: five-task P/R/F1, IoU sweeps, Top-N precision, reports
//! - [`cli`]: the command-line front end
//!
//! Runnable walkthroughs for each area live in `examples/`.

pub mod agreement;
pub mod cli;
pub mod corpus;
pub mod export;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod scoring;
pub mod seqlab;
