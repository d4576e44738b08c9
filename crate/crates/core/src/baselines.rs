//! Whole-text similarity baseline: each summary is one averaged vector and a
//! pair is redundant when the two vectors are close.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::compare::{candidate_pairs, Detection, RedundancyVerdict, Scope};
use crate::corpus::Corpus;
use crate::embeddings::{cosine, embed_phrase_average, EmbeddingStore};
use crate::error::Result;
use crate::preprocess::assemble_sequence;

/// Symmetric verdicts: a pair is redundant when its summaries are byte
/// identical or the cosine of their averaged token vectors exceeds
/// `threshold`. Redundant verdicts set both directions and total equivalence.
/// Cases whose vector is zero are skipped with a warning.
pub fn wholetext_detect(corpus: &Corpus, store: &EmbeddingStore, threshold: f64, scope: Scope) -> Result<Detection> {
    let mut vectors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut ids = Vec::new();
    let mut skipped = Vec::new();
    for case in corpus.cases() {
        let tokens: Vec<String> = assemble_sequence(case)?.tokens().map(str::to_string).collect();
        let v = embed_phrase_average(&tokens, store);
        if v.iter().all(|&x| x == 0.0) {
            warn!("{}: zero summary vector, skipped", case.id);
            skipped.push(case.id.clone());
            continue;
        }
        vectors.insert(&case.id, v);
        ids.push((case.id.as_str(), case.project.as_str()));
    }
    skipped.sort();
    let summary = |id: &str| &corpus.get(id).expect("id from corpus").summary;
    let verdicts = candidate_pairs(&ids, scope)
        .into_par_iter()
        .map(|(a, b)| {
            let redundant = summary(a) == summary(b) || cosine(&vectors[a], &vectors[b])? > threshold;
            Ok(RedundancyVerdict::new(a, b, redundant, redundant, redundant))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Detection { verdicts, skipped })
}
