//! Prompt construction for the two LLM calls (auxiliary knowledge and entity
//! expansion), named entity referring expressions, and bookkeeping for
//! knowledge generated by several LLMs.
//!
//! Every builder is a pure function of its inputs, so identical inputs give
//! byte-identical prompts.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetSplit, EntityType, SplitName};

/// LLM whose knowledge is used for dev and test splits.
pub const CANONICAL_LLM: &str = "gpt-3.5-turbo";

const KNOWLEDGE_QUESTION: &str = "Comprehensively analyze the Text and the Image, which named \
entities and their corresponding types are included in the Text? Explain the reason for your \
judgment.";

const DEFAULT_HEAD: &str = include_str!("../assets/knowledge_head.txt");
const DEFAULT_EXPANSION_EXAMPLES: &str = include_str!("../assets/expansion_examples.json");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("entity {entity:?} does not occur in the sentence {sentence:?}")]
    EntityNotInSentence { entity: String, sentence: String },
    #[error("entity must be non-empty")]
    EmptyEntity,
    #[error("cannot parse referring expression {0:?}")]
    Unparseable(String),
    #[error("knowledge for unknown sample id {id:?} (from {llm})")]
    UnknownSample { id: String, llm: String },
    #[error("{split} knowledge must come from {canonical}, which is not among the knowledge sets")]
    MissingCanonical { split: SplitName, canonical: String },
    #[error("{llm} has no knowledge for sample {id:?}")]
    MissingKnowledge { id: String, llm: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A manually annotated in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub id: String,
    pub sentence: String,
    pub image_description: String,
    pub annotation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeQuery<'a> {
    pub sentence: &'a str,
    pub image_description: &'a str,
}

fn knowledge_block(out: &mut String, sentence: &str, image: &str, answer: Option<&str>) {
    out.push_str("Text: ");
    out.push_str(sentence);
    out.push_str("\nImage: ");
    out.push_str(image);
    out.push_str("\nQuestion: ");
    out.push_str(KNOWLEDGE_QUESTION);
    out.push_str("\nAnswer:");
    if let Some(a) = answer {
        out.push(' ');
        out.push_str(a);
        out.push_str("\n\n");
    }
}

/// Head, then one filled block per example (most similar first), then the
/// query block with an empty answer.
pub fn build_knowledge_prompt(
    head: &str,
    examples: &[AnnotatedExample],
    query: &KnowledgeQuery<'_>,
) -> String {
    let mut out = String::new();
    let head = head.trim_end();
    if !head.is_empty() {
        out.push_str(head);
        out.push_str("\n\n");
    }
    for ex in examples {
        knowledge_block(
            &mut out,
            &ex.sentence,
            &ex.image_description,
            Some(&ex.annotation),
        );
    }
    knowledge_block(&mut out, query.sentence, query.image_description, None);
    out
}

/// A fixed, hand-written example for the expansion prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionExample {
    pub background: String,
    pub text: String,
    pub entity: String,
    pub answer: String,
}

fn expansion_block(
    out: &mut String,
    background: &str,
    text: &str,
    entity: &str,
    answer: Option<&str>,
) {
    out.push_str("Background: ");
    out.push_str(background);
    out.push_str("\nText: ");
    out.push_str(text);
    out.push_str(
        "\nQuestion: In the context of the provided information, tell me briefly what is the ",
    );
    out.push_str(entity);
    out.push_str(" in the Text?\nAnswer:");
    if let Some(a) = answer {
        out.push(' ');
        out.push_str(a);
        out.push_str("\n\n");
    }
}

pub fn build_expansion_prompt(
    examples: &[ExpansionExample],
    background: &str,
    sentence: &str,
    entity: &str,
) -> Result<String, PromptError> {
    if entity.is_empty() {
        return Err(PromptError::EmptyEntity);
    }
    if !sentence.contains(entity) {
        return Err(PromptError::EntityNotInSentence {
            entity: entity.to_string(),
            sentence: sentence.to_string(),
        });
    }
    let mut out = String::new();
    for ex in examples {
        expansion_block(
            &mut out,
            &ex.background,
            &ex.text,
            &ex.entity,
            Some(&ex.answer),
        );
    }
    expansion_block(&mut out, background, sentence, entity, None);
    Ok(out)
}

/// Editable prompt configuration: the knowledge prompt head and the fixed
/// expansion examples. `Default` uses the copies bundled with the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptConfig {
    pub knowledge_head: String,
    pub expansion_examples: Vec<ExpansionExample>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            knowledge_head: DEFAULT_HEAD.to_string(),
            expansion_examples: serde_json::from_str(DEFAULT_EXPANSION_EXAMPLES)
                .expect("bundled expansion examples are valid"),
        }
    }
}

impl PromptConfig {
    /// Overrides the bundled head and/or examples with files on disk.
    pub fn load(
        head: Option<&Path>,
        expansion_examples: Option<&Path>,
    ) -> Result<Self, PromptError> {
        let mut cfg = Self::default();
        if let Some(p) = head {
            cfg.knowledge_head = fs::read_to_string(p).map_err(|e| PromptError::Config {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
        }
        if let Some(p) = expansion_examples {
            let text = fs::read_to_string(p)?;
            cfg.expansion_examples =
                serde_json::from_str(&text).map_err(|e| PromptError::Config {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
        }
        Ok(cfg)
    }
}

/// `"{entity} ({type}) - {expansion}"`, or `"{entity} ({type})"` without an
/// expansion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReferringExpression {
    pub entity: String,
    pub etype: EntityType,
    pub expansion: String,
    pub rendered: String,
}

pub fn compose_referring_expression(
    entity: &str,
    etype: EntityType,
    expansion: &str,
) -> Result<ReferringExpression, PromptError> {
    if entity.trim().is_empty() {
        return Err(PromptError::EmptyEntity);
    }
    let expansion = expansion.split_whitespace().collect::<Vec<_>>().join(" ");
    let rendered = if expansion.is_empty() {
        format!("{entity} ({etype})")
    } else {
        format!("{entity} ({etype}) - {expansion}")
    };
    Ok(ReferringExpression {
        entity: entity.to_string(),
        etype,
        expansion,
        rendered,
    })
}

/// Splits a rendered expression at the first `" (TYPE)"` marker that is
/// followed by the end of the string or by `" - "`.
pub fn parse_referring_expression(rendered: &str) -> Result<ReferringExpression, PromptError> {
    for (pos, _) in rendered.match_indices(" (") {
        for t in EntityType::ALL {
            let marker = format!(" ({t})");
            let rest = &rendered[pos..];
            let Some(after) = rest.strip_prefix(marker.as_str()) else {
                continue;
            };
            let expansion = if after.is_empty() {
                ""
            } else if let Some(x) = after.strip_prefix(" - ") {
                x
            } else {
                continue;
            };
            let entity = &rendered[..pos];
            if entity.is_empty() {
                continue;
            }
            return Ok(ReferringExpression {
                entity: entity.to_string(),
                etype: t,
                expansion: expansion.to_string(),
                rendered: rendered.to_string(),
            });
        }
    }
    Err(PromptError::Unparseable(rendered.to_string()))
}

/// Knowledge text per LLM name and sample id.
pub type KnowledgeSets = BTreeMap<String, HashMap<String, String>>;

/// One knowledge file line: `{"id", "llm", "knowledge"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub id: String,
    pub llm: String,
    pub knowledge: String,
}

pub fn read_knowledge_sets<R: BufRead>(r: R) -> Result<KnowledgeSets, PromptError> {
    let mut sets = KnowledgeSets::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: KnowledgeRecord = serde_json::from_str(&line).map_err(|e| PromptError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let per_llm = sets.entry(rec.llm.clone()).or_default();
        if per_llm.insert(rec.id.clone(), rec.knowledge).is_some() {
            return Err(PromptError::Parse {
                line: i + 1,
                message: format!("duplicate knowledge for ({}, {})", rec.id, rec.llm),
            });
        }
    }
    Ok(sets)
}

/// Builds the knowledge records for one split. Training data gets one record
/// per (sample, LLM) pair; dev and test only use [`CANONICAL_LLM`]-style
/// `canonical` knowledge and must have it for every sample. Records are
/// ordered by sample, then by LLM name.
pub fn merge_augmented(
    base: &DatasetSplit,
    knowledge_sets: &KnowledgeSets,
    target: SplitName,
    canonical: &str,
) -> Result<Vec<KnowledgeRecord>, PromptError> {
    for (llm, per_id) in knowledge_sets {
        let mut ids: Vec<&String> = per_id.keys().collect();
        ids.sort();
        if let Some(id) = ids.into_iter().find(|id| base.get(id).is_none()) {
            return Err(PromptError::UnknownSample {
                id: id.clone(),
                llm: llm.clone(),
            });
        }
    }
    let mut out = Vec::new();
    match target {
        SplitName::Train => {
            for s in base.samples() {
                for (llm, per_id) in knowledge_sets {
                    if let Some(k) = per_id.get(&s.id) {
                        out.push(KnowledgeRecord {
                            id: s.id.clone(),
                            llm: llm.clone(),
                            knowledge: k.clone(),
                        });
                    }
                }
            }
        }
        SplitName::Dev | SplitName::Test => {
            let per_id =
                knowledge_sets
                    .get(canonical)
                    .ok_or_else(|| PromptError::MissingCanonical {
                        split: target,
                        canonical: canonical.to_string(),
                    })?;
            for s in base.samples() {
                let k = per_id
                    .get(&s.id)
                    .ok_or_else(|| PromptError::MissingKnowledge {
                        id: s.id.clone(),
                        llm: canonical.to_string(),
                    })?;
                out.push(KnowledgeRecord {
                    id: s.id.clone(),
                    llm: canonical.to_string(),
                    knowledge: k.clone(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::sample;
    use proptest::prelude::*;

    fn example(i: usize) -> AnnotatedExample {
        AnnotatedExample {
            id: format!("ex{i}"),
            sentence: format!("sentence number {i}"),
            image_description: format!("picture {i}"),
            annotation: format!("ANNOTATION-{i}"),
        }
    }

    const QUERY: KnowledgeQuery<'static> = KnowledgeQuery {
        sentence: "Messi scores again",
        image_description: "a football player celebrating",
    };

    #[test]
    fn knowledge_prompt_without_examples() {
        let p = build_knowledge_prompt("HEAD", &[], &QUERY);
        let expected = format!(
            "HEAD\n\nText: Messi scores again\nImage: a football player celebrating\nQuestion: {KNOWLEDGE_QUESTION}\nAnswer:"
        );
        assert_eq!(p, expected);
    }

    #[test]
    fn knowledge_prompt_with_five_examples() {
        let examples: Vec<_> = (0..5).map(example).collect();
        let p = build_knowledge_prompt("HEAD", &examples, &QUERY);
        assert_eq!(p.matches("Question: ").count(), 6);
        assert_eq!(p.matches("\nAnswer: ANNOTATION-").count(), 5);
        assert!(p.ends_with("Answer:"));
        // most similar first
        assert!(p.find("ANNOTATION-0").unwrap() < p.find("ANNOTATION-4").unwrap());
        assert_eq!(p, build_knowledge_prompt("HEAD", &examples, &QUERY));
    }

    #[test]
    fn bundled_config_loads() {
        let cfg = PromptConfig::default();
        assert!(!cfg.knowledge_head.is_empty());
        assert!(!cfg.expansion_examples.is_empty());
    }

    #[test]
    fn expansion_prompt_slot_fill() {
        let ex = PromptConfig::default().expansion_examples;
        let p = build_expansion_prompt(&ex, "a player", "CP3 and Griffin win", "CP3").unwrap();
        assert!(p.ends_with(
            "Text: CP3 and Griffin win\nQuestion: In the context of the provided information, tell me briefly what is the CP3 in the Text?\nAnswer:"
        ));
        assert!(matches!(
            build_expansion_prompt(&ex, "a player", "Griffin wins", "CP3"),
            Err(PromptError::EntityNotInSentence { .. })
        ));
    }

    #[test]
    fn expansion_prompts_differ_only_in_entity_slot() {
        let ex = PromptConfig::default().expansion_examples;
        let s = "Kobe and Shaq celebrate";
        let a = build_expansion_prompt(&ex, "two players", s, "Kobe").unwrap();
        let b = build_expansion_prompt(&ex, "two players", s, "Shaq").unwrap();
        assert_ne!(a, b);
        let slot = "what is the ";
        let (pa, pb) = (a.rfind(slot).unwrap(), b.rfind(slot).unwrap());
        assert_eq!(pa, pb);
        assert_eq!(a[..pa], b[..pb]);
        assert_eq!(a[pa + slot.len() + 4..], b[pb + slot.len() + 4..]);
    }

    #[test]
    fn referring_expression_examples() {
        let r = compose_referring_expression("Hermione", EntityType::Per, "A female character")
            .unwrap();
        assert_eq!(r.rendered, "Hermione (PER) - A female character");
        let r = compose_referring_expression(
            "antonellaRoccuzzo",
            EntityType::Per,
            "A woman associated with Lionel Messi",
        )
        .unwrap();
        assert_eq!(
            r.rendered,
            "antonellaRoccuzzo (PER) - A woman associated with Lionel Messi"
        );
        assert_eq!(
            compose_referring_expression("X", EntityType::Loc, "")
                .unwrap()
                .rendered,
            "X (LOC)"
        );
        let r = compose_referring_expression("X", EntityType::Org, "  a \n big\tclub ").unwrap();
        assert_eq!(r.rendered, "X (ORG) - a big club");
        assert!(matches!(
            compose_referring_expression(" ", EntityType::Org, "x"),
            Err(PromptError::EmptyEntity)
        ));
    }

    #[test]
    fn parse_handles_parenthesized_entities() {
        let r = compose_referring_expression("Paris (France)", EntityType::Loc, "A city (capital)")
            .unwrap();
        assert_eq!(parse_referring_expression(&r.rendered).unwrap(), r);
        assert!(parse_referring_expression("no type here").is_err());
    }

    proptest! {
        #[test]
        fn referring_expression_parses_back(
            entity in "[A-Za-z0-9()#@ ]{0,12}[A-Za-z0-9]",
            t in 0usize..4,
            expansion in "[A-Za-z0-9()\\- ]{0,30}",
        ) {
            prop_assume!(!entity.contains(") - "));
            let r = compose_referring_expression(&entity, EntityType::ALL[t], &expansion).unwrap();
            let back = parse_referring_expression(&r.rendered).unwrap();
            prop_assert_eq!(back, r);
        }

        #[test]
        fn knowledge_prompt_contains_each_annotation_once(n in 0usize..8) {
            let examples: Vec<_> = (0..n).map(example).collect();
            let p = build_knowledge_prompt("head", &examples, &QUERY);
            for ex in &examples {
                prop_assert_eq!(p.matches(&format!("Answer: {}\n", ex.annotation)).count(), 1);
            }
            prop_assert_eq!(p.matches("Answer:").count(), n + 1);
            prop_assert!(p.ends_with("Answer:"));
        }
    }

    fn split(n: usize, name: SplitName) -> DatasetSplit {
        let samples = (0..n)
            .map(|i| sample(&format!("s{i}"), &["a"], vec![]))
            .collect();
        DatasetSplit::new(name, samples).unwrap()
    }

    fn sets(llms: &[&str], n: usize) -> KnowledgeSets {
        llms.iter()
            .map(|l| {
                let per = (0..n)
                    .map(|i| (format!("s{i}"), format!("{l} on s{i}")))
                    .collect();
                (l.to_string(), per)
            })
            .collect()
    }

    const LLMS: [&str; 5] = [
        CANONICAL_LLM,
        "llama-2-13b-chat-hf",
        "llama-2-7b-chat-hf",
        "vicuna-13b-v1.5",
        "vicuna-7b-v1.5",
    ];

    #[test]
    fn train_is_cross_product() {
        let recs = merge_augmented(
            &split(2, SplitName::Train),
            &sets(&LLMS, 2),
            SplitName::Train,
            CANONICAL_LLM,
        )
        .unwrap();
        assert_eq!(recs.len(), 10);
        assert_eq!(
            (recs[0].id.as_str(), recs[0].llm.as_str()),
            ("s0", CANONICAL_LLM)
        );
        assert_eq!(
            (recs[5].id.as_str(), recs[5].llm.as_str()),
            ("s1", CANONICAL_LLM)
        );
    }

    #[test]
    fn dev_uses_canonical_only() {
        let recs = merge_augmented(
            &split(3, SplitName::Dev),
            &sets(&LLMS, 3),
            SplitName::Dev,
            CANONICAL_LLM,
        )
        .unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.llm == CANONICAL_LLM));
        let err = merge_augmented(
            &split(3, SplitName::Test),
            &sets(&LLMS[1..], 3),
            SplitName::Test,
            CANONICAL_LLM,
        );
        assert!(matches!(err, Err(PromptError::MissingCanonical { .. })));
    }

    #[test]
    fn unknown_sample_rejected() {
        let err = merge_augmented(
            &split(1, SplitName::Train),
            &sets(&LLMS, 2),
            SplitName::Train,
            CANONICAL_LLM,
        );
        assert!(matches!(err, Err(PromptError::UnknownSample { ref id, .. }) if id == "s1"));
    }

    #[test]
    fn reads_knowledge_lines() {
        let text = "{\"id\":\"s0\",\"llm\":\"a\",\"knowledge\":\"k\"}\n{\"id\":\"s0\",\"llm\":\"b\",\"knowledge\":\"k2\"}\n";
        let sets = read_knowledge_sets(std::io::Cursor::new(text)).unwrap();
        assert_eq!(sets.len(), 2);
        let dup = "{\"id\":\"s0\",\"llm\":\"a\",\"knowledge\":\"k\"}\n{\"id\":\"s0\",\"llm\":\"a\",\"knowledge\":\"k\"}\n";
        assert!(read_knowledge_sets(std::io::Cursor::new(dup)).is_err());
    }
}
