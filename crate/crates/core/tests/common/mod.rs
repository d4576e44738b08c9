#![allow(dead_code)]

use tcdedup::corpus::{
    AnnotatedCorpus, Corpus, EntityAnnotation, EntityCategory, Extraction, RelationAnnotation, TestCase,
};
use tcdedup::embeddings::{oov_vector, EmbeddingStore};
use tcdedup::preprocess::{normalize_tokens, tokenize_text};

use EntityCategory::{Behavior as B, Component as C, Manner as M, Prerequisite as P};

/// A hand transcription: entity phrases with categories, and relations as
/// `(head, component)` indices into the phrase list.
pub struct Gold<'a> {
    pub id: &'a str,
    pub project: &'a str,
    pub summary: &'a str,
    pub entities: &'a [(&'a str, EntityCategory)],
    pub relations: &'a [(usize, usize)],
}

/// Locates each phrase at its first occurrence not already taken.
pub fn transcribe(g: &Gold<'_>) -> Extraction {
    let case = tokenize_text(g.summary);
    let mut entities: Vec<EntityAnnotation> = Vec::new();
    for (phrase, category) in g.entities {
        let words = normalize_tokens(phrase);
        let found = case.sentences.iter().enumerate().find_map(|(s, sentence)| {
            (0..sentence.len().saturating_sub(words.len() - 1)).find_map(|start| {
                let candidate = EntityAnnotation {
                    sentence_index: s,
                    token_start: start,
                    token_end: start + words.len() - 1,
                    category: *category,
                };
                (sentence[start..start + words.len()] == words[..] && !entities.iter().any(|e| e.overlaps(&candidate)))
                    .then_some(candidate)
            })
        });
        entities.push(found.unwrap_or_else(|| panic!("{:?} not found in {:?}", phrase, g.summary)));
    }
    let relations = g
        .relations
        .iter()
        .map(|&(head, component)| RelationAnnotation {
            head,
            component,
            category: entities[head].category.relation().expect("head is not a Component"),
            score: None,
        })
        .collect();
    Extraction {
        entities,
        relations,
        ..Default::default()
    }
}

pub fn annotated(golds: &[Gold<'_>]) -> AnnotatedCorpus {
    let corpus = Corpus::new(
        golds
            .iter()
            .map(|g| TestCase {
                id: g.id.into(),
                project: g.project.into(),
                summary: g.summary.into(),
            })
            .collect(),
    )
    .unwrap();
    AnnotatedCorpus::new(corpus, golds.iter().map(transcribe).collect()).unwrap()
}

/// Hash-seeded unit vectors for every token of `data`, with frequencies
/// counted over the same tokens: distinct words are nearly orthogonal.
pub fn hashed_store(data: &AnnotatedCorpus, dim: usize) -> EmbeddingStore {
    let mut words: Vec<&str> = data.tokenized.iter().flat_map(|t| t.tokens()).collect();
    words.sort_unstable();
    words.dedup();
    let store = EmbeddingStore::from_vectors(dim, words.iter().map(|w| (w.to_string(), oov_vector(w, dim)))).unwrap();
    store.with_frequencies(data.tokenized.iter().flat_map(|t| t.tokens()))
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

const FIG1_ENTITIES_A: &[(&str, EntityCategory)] =
    &[("when drawing 3d graphics", P), ("gear rotation processing", C), ("mesa-util tool", M)];
const FIG1_ENTITIES_B: &[(&str, EntityCategory)] =
    &[("when drawing 3d graphics", P), ("gear rotation processing", C), ("unixbench tool", M)];
const FIG1_RELATIONS: &[(usize, usize)] = &[(0, 1), (2, 1)];

/// Two cases that share everything but the tool.
pub fn tool_pair() -> [Gold<'static>; 2] {
    [
        Gold {
            id: "mesa",
            project: "graphics",
            summary: "When drawing 3D graphics, test the gear rotation processing with the mesa-util tool.",
            entities: FIG1_ENTITIES_A,
            relations: FIG1_RELATIONS,
        },
        Gold {
            id: "unixbench",
            project: "graphics",
            summary: "When drawing 3D graphics, test the gear rotation processing with the UnixBench tool.",
            entities: FIG1_ENTITIES_B,
            relations: FIG1_RELATIONS,
        },
    ]
}

/// The same words, attached to different components.
pub fn attachment_pair() -> [Gold<'static>; 2] {
    [
        Gold {
            id: "dir-switch",
            project: "browser",
            summary: "Browse the contents of each resource directory and switch the visit history using the mouse.",
            entities: &[
                ("browse", B),
                ("contents of each resource directory", C),
                ("switch", B),
                ("visit history", C),
                ("mouse", M),
            ],
            relations: &[(0, 1), (2, 3), (4, 3)],
        },
        Gold {
            id: "history-browse",
            project: "browser",
            summary: "Browse the visit history using the mouse.",
            entities: &[("browse", B), ("visit history", C), ("mouse", M)],
            relations: &[(0, 1), (2, 1)],
        },
    ]
}

/// Prerequisites that differ only by a negation.
pub fn logic_pair() -> [Gold<'static>; 2] {
    [
        Gold {
            id: "cpu-no-preset",
            project: "system",
            summary: "Testing the CPU utilization when no preset applications are installed on the system.",
            entities: &[("cpu utilization", C), ("when no preset applications are installed on the system", P)],
            relations: &[(1, 0)],
        },
        Gold {
            id: "cpu-preset",
            project: "system",
            summary: "Testing the CPU utilization when preset applications are installed on the system.",
            entities: &[("cpu utilization", C), ("when preset applications are installed on the system", P)],
            relations: &[(1, 0)],
        },
    ]
}

/// Prerequisites that differ only by a temporal word.
pub fn temporal_pair() -> [Gold<'static>; 2] {
    [
        Gold {
            id: "disk-after",
            project: "system",
            summary: "Testing hard disk can be partitioned after the system installation.",
            entities: &[("partitioned", B), ("hard disk", C), ("after the system installation", P)],
            relations: &[(0, 1), (2, 1)],
        },
        Gold {
            id: "disk-before",
            project: "system",
            summary: "Testing hard disk can be partitioned before the system installation.",
            entities: &[("partitioned", B), ("hard disk", C), ("before the system installation", P)],
            relations: &[(0, 1), (2, 1)],
        },
    ]
}
