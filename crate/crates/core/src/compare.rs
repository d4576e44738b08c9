//! Slot, tuple and test-case comparison under the tuple covering rule.
//!
//! Behaviors are compared by the cosine of averaged word vectors (strategy 1);
//! Components, Manners and Constraints by the cosine of SIF vectors
//! (strategy 2); Prerequisites first by their indicative words and then as in
//! strategy 1 (strategy 3). A case covers another when every tuple of the
//! other has an equivalent tuple in it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedCorpus, Direction, EntityCategory};
use crate::embeddings::{cosine, embed_phrase_average, embed_phrase_sif, fit_sif, EmbeddingStore, SifContext};
use crate::error::{Error, Result};
use crate::tuples::{dissect, TestTuple};

pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicativeLexicon {
    pub logic_words: BTreeSet<String>,
    pub temporal_words: BTreeSet<String>,
}

impl Default for IndicativeLexicon {
    fn default() -> Self {
        let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect();
        IndicativeLexicon {
            logic_words: set(&["no", "not", "without", "non", "cannot", "unable", "disabled"]),
            temporal_words: set(&["before", "after", "when", "while", "during", "until"]),
        }
    }
}

impl IndicativeLexicon {
    pub fn new(logic_words: BTreeSet<String>, temporal_words: BTreeSet<String>) -> Result<Self> {
        let lexicon = IndicativeLexicon {
            logic_words: logic_words.into_iter().map(|w| w.to_lowercase()).collect(),
            temporal_words: temporal_words.into_iter().map(|w| w.to_lowercase()).collect(),
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.logic_words.is_empty() || self.temporal_words.is_empty() {
            return Err(Error::Config("indicative word lists must both be non-empty".into()));
        }
        if let Some(w) = self.logic_words.intersection(&self.temporal_words).next() {
            return Err(Error::Config(format!("\"{w}\" is both a logic and a temporal word")));
        }
        Ok(())
    }

    /// Reads a TOML file with `logic` and `temporal` word arrays.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            logic: BTreeSet<String>,
            temporal: BTreeSet<String>,
        }
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: File =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        IndicativeLexicon::new(file.logic, file.temporal)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.logic_words.contains(word) || self.temporal_words.contains(word)
    }

    /// Lexicon hits in reading order.
    pub fn indicative_words<'a, S: AsRef<str>>(&self, tokens: &'a [S]) -> Vec<&'a str> {
        tokens.iter().map(AsRef::as_ref).filter(|w| self.contains(w)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    PerProject,
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub threshold: f64,
    pub lexicon: IndicativeLexicon,
    pub sif: SifContext,
    pub scope: Scope,
    /// Slots left out of tuple comparison.
    pub ignored: BTreeSet<EntityCategory>,
}

impl ComparisonConfig {
    pub fn new(threshold: f64, sif: SifContext) -> Result<Self> {
        let config = ComparisonConfig {
            threshold,
            lexicon: IndicativeLexicon::default(),
            sif,
            scope: Scope::default(),
            ignored: BTreeSet::new(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1], got {}", self.threshold)));
        }
        self.lexicon.validate()
    }

    pub fn without(mut self, slot: EntityCategory) -> Self {
        self.ignored.insert(slot);
        self
    }
}

/// Fits the SIF context over the distinct Component, Manner and Constraint
/// phrases of `tuples`.
pub fn fit_slot_sif(tuples: &[Vec<TestTuple>], store: &EmbeddingStore, a: f64) -> Result<SifContext> {
    let phrases: BTreeSet<&[String]> = tuples
        .iter()
        .flatten()
        .flat_map(|t| {
            [EntityCategory::Component, EntityCategory::Manner, EntityCategory::Constraint]
                .into_iter()
                .filter_map(|c| t.slot(c))
        })
        .collect();
    let phrases: Vec<Vec<&str>> = phrases
        .into_iter()
        .map(|p| p.iter().map(String::as_str).collect())
        .collect();
    fit_sif(&phrases, store, a)
}

/// Strategy 1: averaged word vectors. Identical phrases score 1.
pub fn compare_behavior<S: AsRef<str> + PartialEq>(
    a: &[S],
    b: &[S],
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Result<(bool, f64)> {
    if a == b {
        return Ok((true, 1.0));
    }
    let score = cosine(&embed_phrase_average(a, store), &embed_phrase_average(b, store))?;
    Ok((score > config.threshold, score))
}

/// Strategy 2: SIF vectors, or strategy 1 when the SIF fit was degenerate.
pub fn compare_nounphrase<S: AsRef<str> + PartialEq>(
    a: &[S],
    b: &[S],
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Result<(bool, f64)> {
    if config.sif.is_degenerate() {
        return compare_behavior(a, b, store, config);
    }
    if a == b {
        return Ok((true, 1.0));
    }
    let score = cosine(
        &embed_phrase_sif(a, store, &config.sif),
        &embed_phrase_sif(b, store, &config.sif),
    )?;
    Ok((score > config.threshold, score))
}

fn indicative_multiset<'a, S: AsRef<str>>(tokens: &'a [S], lexicon: &IndicativeLexicon) -> Vec<&'a str> {
    let mut words = lexicon.indicative_words(tokens);
    words.sort_unstable();
    words
}

/// Strategy 3: differing indicative word multisets mean non-equivalence with
/// score 0; otherwise strategy 1.
pub fn compare_prerequisite<S: AsRef<str> + PartialEq>(
    a: &[S],
    b: &[S],
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Result<(bool, f64)> {
    if indicative_multiset(a, &config.lexicon) != indicative_multiset(b, &config.lexicon) {
        return Ok((false, 0.0));
    }
    compare_behavior(a, b, store, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    /// Both present, similarity not above the threshold.
    Similarity,
    /// Exactly one side is NULL.
    Null,
    /// Prerequisites with different logic or temporal words.
    IndicativeWords,
    /// A phrase vector was zero.
    Unembeddable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMismatch {
    pub slot: EntityCategory,
    pub value_a: Option<String>,
    pub value_b: Option<String>,
    pub similarity: Option<f64>,
    pub kind: MismatchKind,
}

fn phrase(v: Option<&[String]>) -> Option<String> {
    v.map(|w| w.join(" "))
}

/// Compares one slot of two tuples, `None` when equivalent.
fn compare_slot(
    slot: EntityCategory,
    a: Option<&[String]>,
    b: Option<&[String]>,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Option<SlotMismatch> {
    let mismatch = |similarity, kind| SlotMismatch {
        slot,
        value_a: phrase(a),
        value_b: phrase(b),
        similarity,
        kind,
    };
    let (x, y) = match (a, b) {
        (None, None) => return None,
        (Some(x), Some(y)) => (x, y),
        _ => return Some(mismatch(None, MismatchKind::Null)),
    };
    let result = match slot {
        EntityCategory::Behavior => compare_behavior(x, y, store, config),
        EntityCategory::Prerequisite => compare_prerequisite(x, y, store, config),
        _ => compare_nounphrase(x, y, store, config),
    };
    match result {
        Ok((true, _)) => None,
        Ok((false, score)) => {
            let kind = if slot == EntityCategory::Prerequisite
                && indicative_multiset(x, &config.lexicon) != indicative_multiset(y, &config.lexicon)
            {
                MismatchKind::IndicativeWords
            } else {
                MismatchKind::Similarity
            };
            Some(mismatch(Some(score), kind))
        }
        Err(e) => {
            warn!("{slot} comparison failed: {e}");
            Some(mismatch(None, MismatchKind::Unembeddable))
        }
    }
}

/// Compares all five slots; the tuples are equivalent when no slot mismatches.
/// Ignored slots are skipped.
pub fn tuple_equivalent(
    a: &TestTuple,
    b: &TestTuple,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> (bool, Vec<SlotMismatch>) {
    let reasons: Vec<SlotMismatch> = EntityCategory::ALL
        .into_iter()
        .filter(|s| !config.ignored.contains(s))
        .filter_map(|s| compare_slot(s, a.slot(s), b.slot(s), store, config))
        .collect();
    (reasons.is_empty(), reasons)
}

/// True when every tuple of `b` has an equivalent tuple in `a`.
pub fn covers(a: &[TestTuple], b: &[TestTuple], store: &EmbeddingStore, config: &ComparisonConfig) -> Result<bool> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::CoverageUndefined("a case without tuples cannot be compared".into()));
    }
    Ok(b.iter().all(|tb| a.iter().any(|ta| tuple_equivalent(ta, tb, store, config).0)))
}

/// Why one tuple found no equivalent on the other side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    /// The coverage check that failed.
    pub direction: Direction,
    pub uncovered: String,
    /// The candidate with the fewest mismatching slots.
    pub closest: String,
    pub mismatches: Vec<SlotMismatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyVerdict {
    pub id_a: String,
    pub id_b: String,
    pub a_covers_b: bool,
    pub b_covers_a: bool,
    pub redundant: bool,
    pub direction: Direction,
    pub totally_equivalent: bool,
    pub reasons: Vec<Reason>,
}

impl RedundancyVerdict {
    pub fn new(id_a: &str, id_b: &str, a_covers_b: bool, b_covers_a: bool, totally_equivalent: bool) -> Self {
        RedundancyVerdict {
            id_a: id_a.to_string(),
            id_b: id_b.to_string(),
            a_covers_b,
            b_covers_a,
            redundant: a_covers_b || b_covers_a,
            direction: Direction::from_coverage(a_covers_b, b_covers_a),
            totally_equivalent,
            reasons: Vec::new(),
        }
    }
}

/// Coverage of `covered` by `covering`, with a reason per uncovered tuple.
/// Mismatch values are reported as (case a, case b) whatever the direction.
fn check_direction(
    covering: &[TestTuple],
    covered: &[TestTuple],
    direction: Direction,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> (bool, Vec<Reason>) {
    let mut reasons = Vec::new();
    'tuples: for tb in covered {
        let mut best: Option<(usize, Vec<SlotMismatch>)> = None;
        for (i, ta) in covering.iter().enumerate() {
            let (ok, mut mismatches) = tuple_equivalent(ta, tb, store, config);
            if ok {
                continue 'tuples;
            }
            if direction == Direction::BCoversA {
                for m in &mut mismatches {
                    std::mem::swap(&mut m.value_a, &mut m.value_b);
                }
            }
            if best.as_ref().is_none_or(|(_, b)| mismatches.len() < b.len()) {
                best = Some((i, mismatches));
            }
        }
        let (closest, mismatches) = best.expect("covering side is non-empty");
        reasons.push(Reason {
            direction,
            uncovered: tb.to_string(),
            closest: covering[closest].to_string(),
            mismatches,
        });
    }
    (reasons.is_empty(), reasons)
}

/// Verdict for one pair of dissected cases.
pub fn compare_cases(
    id_a: &str,
    tuples_a: &[TestTuple],
    id_b: &str,
    tuples_b: &[TestTuple],
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Result<RedundancyVerdict> {
    if tuples_a.is_empty() || tuples_b.is_empty() {
        return Err(Error::CoverageUndefined(format!("{id_a} or {id_b} has no tuples")));
    }
    let (ab, mut reasons) = check_direction(tuples_a, tuples_b, Direction::ACoversB, store, config);
    let (ba, more) = check_direction(tuples_b, tuples_a, Direction::BCoversA, store, config);
    reasons.extend(more);
    let mut verdict = RedundancyVerdict::new(id_a, id_b, ab, ba, ab && ba && tuples_a.len() == tuples_b.len());
    verdict.reasons = reasons;
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub verdicts: Vec<RedundancyVerdict>,
    /// Cases without a Component, left out of every pair.
    pub skipped: Vec<String>,
}

/// Unordered pairs to compare, each `(a, b)` with `a < b` by id, sorted.
pub fn candidate_pairs<'a>(ids: &[(&'a str, &'a str)], scope: Scope) -> Vec<(&'a str, &'a str)> {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for &(id, project) in ids {
        let key = match scope {
            Scope::PerProject => project,
            Scope::Global => "",
        };
        groups.entry(key).or_default().push(id);
    }
    let mut pairs = Vec::new();
    for mut members in groups.into_values() {
        members.sort_unstable();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                pairs.push((members[i], members[j]));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Dissects every case and compares all pairs within scope. Cases without
/// tuples are listed in `skipped`. Output order is lexicographic by id pair.
pub fn detect_redundancy(
    data: &AnnotatedCorpus,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Result<Detection> {
    let tuples: Vec<Vec<TestTuple>> = data
        .tokenized
        .iter()
        .zip(&data.extractions)
        .map(|(t, e)| dissect(t, e).tuples)
        .collect();
    detect_with_tuples(data, &tuples, store, config)
}

/// As [`detect_redundancy`], with tuples already dissected (parallel to the
/// corpus).
pub fn detect_with_tuples(
    data: &AnnotatedCorpus,
    tuples: &[Vec<TestTuple>],
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Result<Detection> {
    config.validate()?;
    let cases = data.corpus.cases();
    let mut skipped: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<&str, &[TestTuple]> = BTreeMap::new();
    let mut ids = Vec::new();
    for (case, t) in cases.iter().zip(tuples) {
        if t.is_empty() {
            skipped.push(case.id.clone());
        } else {
            by_id.insert(&case.id, t);
            ids.push((case.id.as_str(), case.project.as_str()));
        }
    }
    skipped.sort();
    if !skipped.is_empty() {
        warn!("{} case(s) without a Component skipped", skipped.len());
    }
    let pairs = candidate_pairs(&ids, config.scope);
    let verdicts = pairs
        .par_iter()
        .map(|&(a, b)| compare_cases(a, by_id[a], b, by_id[b], store, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Detection { verdicts, skipped })
}
