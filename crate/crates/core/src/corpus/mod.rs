//! Test case corpora, gold annotations and pair-level redundancy labels.
//!
//! All three files are line-delimited JSON. A corpus line is
//! `{"id": .., "project": .., "summary": ..}`; an annotation line carries the
//! case id plus `entities` and `relations` arrays; a label line is
//! `{"id_a", "id_b", "redundant", "direction"}`.

mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{assemble_sequence, TokenizedCase};
use crate::tuples::TestTuple;

pub use synth::{generate_synthetic_corpus, lexicon_entry, CanonicalTuple, PairKind, SynthSpec, SyntheticCorpus, SyntheticPair};

/// Longest entity span, in tokens.
pub const MAX_SPAN_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub project: String,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityCategory {
    Component,
    Behavior,
    Prerequisite,
    Manner,
    Constraint,
}

impl EntityCategory {
    pub const ALL: [EntityCategory; 5] = [
        EntityCategory::Component,
        EntityCategory::Behavior,
        EntityCategory::Prerequisite,
        EntityCategory::Manner,
        EntityCategory::Constraint,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityCategory::Component => "Component",
            EntityCategory::Behavior => "Behavior",
            EntityCategory::Prerequisite => "Prerequisite",
            EntityCategory::Manner => "Manner",
            EntityCategory::Constraint => "Constraint",
        }
    }

    /// The relation that links an entity of this category to a Component.
    pub fn relation(self) -> Option<RelationCategory> {
        match self {
            EntityCategory::Component => None,
            EntityCategory::Behavior => Some(RelationCategory::Act),
            EntityCategory::Prerequisite => Some(RelationCategory::Require),
            EntityCategory::Manner => Some(RelationCategory::Use),
            EntityCategory::Constraint => Some(RelationCategory::Satisfy),
        }
    }
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityCategory::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown entity category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationCategory {
    Act,
    Require,
    Use,
    Satisfy,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::Act,
        RelationCategory::Require,
        RelationCategory::Use,
        RelationCategory::Satisfy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The only head-entity category this relation accepts.
    pub fn head_category(self) -> EntityCategory {
        match self {
            RelationCategory::Act => EntityCategory::Behavior,
            RelationCategory::Require => EntityCategory::Prerequisite,
            RelationCategory::Use => EntityCategory::Manner,
            RelationCategory::Satisfy => EntityCategory::Constraint,
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A typed token span; `token_end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub category: EntityCategory,
}

impl EntityAnnotation {
    pub fn len(&self) -> usize {
        self.token_end + 1 - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &EntityAnnotation) -> bool {
        self.sentence_index == other.sentence_index
            && self.token_start <= other.token_end
            && other.token_start <= self.token_end
    }

    pub fn same_span(&self, other: &EntityAnnotation) -> bool {
        self.sentence_index == other.sentence_index
            && self.token_start == other.token_start
            && self.token_end == other.token_end
    }
}

/// Link from a non-Component entity (`head`) to a Component entity. Both are
/// indices into the owning entity list. `score` is the classifier probability
/// for model output and absent for gold or imported relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationAnnotation {
    pub head: usize,
    pub component: usize,
    pub category: RelationCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    Imported,
    #[default]
    Gold,
}

/// Entities and relations of one test case, whether hand-labeled, imported or
/// predicted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub entities: Vec<EntityAnnotation>,
    pub relations: Vec<RelationAnnotation>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Extraction {
    pub fn entities_of(&self, category: EntityCategory) -> impl Iterator<Item = (usize, &EntityAnnotation)> {
        self.entities.iter().enumerate().filter(move |(_, e)| e.category == category)
    }

    /// Checks spans against the tokenized case and relations against the
    /// type-compatibility mask.
    pub fn validate(&self, case_id: &str, tokens: &TokenizedCase) -> Result<()> {
        for (i, e) in self.entities.iter().enumerate() {
            if e.token_start > e.token_end {
                return Err(Error::Validation(format!(
                    "{case_id}: entity {i} has token_start {} > token_end {}",
                    e.token_start, e.token_end
                )));
            }
            if e.len() > MAX_SPAN_LEN {
                return Err(Error::Validation(format!(
                    "{case_id}: entity {i} spans {} tokens (max {MAX_SPAN_LEN})",
                    e.len()
                )));
            }
            if tokens.span(e.sentence_index, e.token_start, e.token_end).is_none() {
                return Err(Error::Validation(format!(
                    "{case_id}: entity {i} span {}:{}..={} is out of bounds",
                    e.sentence_index, e.token_start, e.token_end
                )));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            let (Some(head), Some(comp)) = (self.entities.get(r.head), self.entities.get(r.component)) else {
                return Err(Error::Validation(format!(
                    "{case_id}: relation {i} references a missing entity"
                )));
            };
            if comp.category != EntityCategory::Component {
                return Err(Error::Validation(format!(
                    "{case_id}: relation {i} target is a {} entity, not a Component",
                    comp.category
                )));
            }
            if head.category != r.category.head_category() {
                return Err(Error::Validation(format!(
                    "{case_id}: relation {i} {} cannot have a {} head",
                    r.category, head.category
                )));
            }
        }
        Ok(())
    }

    pub fn entity_tokens<'a>(&self, tokens: &'a TokenizedCase, entity: usize) -> &'a [String] {
        let e = &self.entities[entity];
        tokens
            .span(e.sentence_index, e.token_start, e.token_end)
            .expect("entity validated against tokens")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ACoversB,
    BCoversA,
    Mutual,
    None,
}

impl Direction {
    pub fn from_coverage(a_covers_b: bool, b_covers_a: bool) -> Self {
        match (a_covers_b, b_covers_a) {
            (true, true) => Direction::Mutual,
            (true, false) => Direction::ACoversB,
            (false, true) => Direction::BCoversA,
            (false, false) => Direction::None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::ACoversB => Direction::BCoversA,
            Direction::BCoversA => Direction::ACoversB,
            d => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyLabel {
    pub id_a: String,
    pub id_b: String,
    pub redundant: bool,
    pub direction: Direction,
}

impl RedundancyLabel {
    /// Reorders the pair so that `id_a < id_b`, flipping the direction.
    pub fn canonical(&self) -> RedundancyLabel {
        if self.id_a <= self.id_b {
            self.clone()
        } else {
            RedundancyLabel {
                id_a: self.id_b.clone(),
                id_b: self.id_a.clone(),
                redundant: self.redundant,
                direction: self.direction.flipped(),
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.id_a == self.id_b {
            return Err(Error::Validation(format!("label pairs {:?} with itself", self.id_a)));
        }
        if self.redundant == (self.direction == Direction::None) {
            return Err(Error::Validation(format!(
                "label ({}, {}): direction {:?} inconsistent with redundant={}",
                self.id_a, self.id_b, self.direction, self.redundant
            )));
        }
        Ok(())
    }
}

/// A validated, immutable set of test cases with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    cases: Vec<TestCase>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(cases: Vec<TestCase>) -> Result<Self> {
        let mut index = HashMap::with_capacity(cases.len());
        for (i, case) in cases.iter().enumerate() {
            if case.id.is_empty() {
                return Err(Error::Validation(format!("test case #{i} has an empty id")));
            }
            if case.summary.trim().is_empty() {
                return Err(Error::Validation(format!("test case {:?} has an empty summary", case.id)));
            }
            if index.insert(case.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate test case id {:?}", case.id)));
            }
        }
        Ok(Corpus { cases, index })
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&TestCase> {
        self.position(id).map(|i| &self.cases[i])
    }

    /// The cases at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus::new(indices.iter().map(|&i| self.cases[i].clone()).collect()).expect("subset of a valid corpus")
    }
}

/// A corpus with its tokenization and one extraction per case.
#[derive(Debug, Clone)]
pub struct AnnotatedCorpus {
    pub corpus: Corpus,
    pub tokenized: Vec<TokenizedCase>,
    pub extractions: Vec<Extraction>,
}

impl AnnotatedCorpus {
    /// Tokenizes every case and attaches the given extractions, validating each.
    pub fn new(corpus: Corpus, extractions: Vec<Extraction>) -> Result<Self> {
        if extractions.len() != corpus.len() {
            return Err(Error::Validation(format!(
                "{} extractions for {} test cases",
                extractions.len(),
                corpus.len()
            )));
        }
        let tokenized = tokenize_corpus(&corpus)?;
        for ((case, tokens), ex) in corpus.cases().iter().zip(&tokenized).zip(&extractions) {
            ex.validate(&case.id, tokens)?;
        }
        Ok(AnnotatedCorpus {
            corpus,
            tokenized,
            extractions,
        })
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> AnnotatedCorpus {
        AnnotatedCorpus {
            corpus: self.corpus.subset(indices),
            tokenized: indices.iter().map(|&i| self.tokenized[i].clone()).collect(),
            extractions: indices.iter().map(|&i| self.extractions[i].clone()).collect(),
        }
    }
}

pub fn tokenize_corpus(corpus: &Corpus) -> Result<Vec<TokenizedCase>> {
    corpus.cases().iter().map(assemble_sequence).collect()
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, record));
    }
    Ok(records)
}

pub(crate) fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let records: Vec<(usize, TestCase)> = read_jsonl(path)?;
    if records.is_empty() {
        warn!("{}: corpus file holds no test cases", path.display());
    }
    let mut seen = HashSet::new();
    for (line, case) in &records {
        if !seen.insert(case.id.as_str()) {
            return Err(Error::Validation(format!(
                "{}:{line}: duplicate test case id {:?}",
                path.display(),
                case.id
            )));
        }
    }
    Corpus::new(records.into_iter().map(|(_, c)| c).collect())
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_jsonl(path.as_ref(), corpus.cases())
}

/// One line of an annotation or extraction file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    #[serde(default)]
    pub entities: Vec<EntityAnnotation>,
    #[serde(default)]
    pub relations: Vec<RelationAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuples: Option<Vec<TestTuple>>,
}

/// Reads an annotation-format file into one extraction per corpus case, in
/// corpus order. Cases without a record get an empty extraction.
pub fn read_extractions(path: impl AsRef<Path>, corpus: &Corpus, provenance: Provenance) -> Result<AnnotatedCorpus> {
    let path = path.as_ref();
    let records: Vec<(usize, AnnotationRecord)> = read_jsonl(path)?;
    let mut extractions = vec![
        Extraction {
            provenance,
            ..Extraction::default()
        };
        corpus.len()
    ];
    let mut seen = HashSet::new();
    for (line, record) in records {
        let Some(pos) = corpus.position(&record.id) else {
            return Err(Error::Validation(format!(
                "{}:{line}: annotation for unknown test case {:?}",
                path.display(),
                record.id
            )));
        };
        if !seen.insert(pos) {
            return Err(Error::Validation(format!(
                "{}:{line}: second annotation record for {:?}",
                path.display(),
                record.id
            )));
        }
        extractions[pos] = Extraction {
            entities: record.entities,
            relations: record.relations,
            provenance,
        };
    }
    AnnotatedCorpus::new(corpus.clone(), extractions)
}

/// Loads gold annotations.
pub fn load_annotations(path: impl AsRef<Path>, corpus: &Corpus) -> Result<AnnotatedCorpus> {
    read_extractions(path, corpus, Provenance::Gold)
}

/// Writes one annotation record per case. When `tuples` is given it must be
/// parallel to the corpus and is stored in each record's `tuples` array.
pub fn write_extractions(path: impl AsRef<Path>, annotated: &AnnotatedCorpus, tuples: Option<&[Vec<TestTuple>]>) -> Result<()> {
    let records: Vec<AnnotationRecord> = annotated
        .corpus
        .cases()
        .iter()
        .zip(&annotated.extractions)
        .enumerate()
        .map(|(i, (case, ex))| AnnotationRecord {
            id: case.id.clone(),
            entities: ex.entities.clone(),
            relations: ex.relations.clone(),
            provenance: Some(ex.provenance),
            tuples: tuples.map(|t| t[i].clone()),
        })
        .collect();
    write_jsonl(path.as_ref(), &records)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<RedundancyLabel>> {
    let path = path.as_ref();
    let records: Vec<(usize, RedundancyLabel)> = read_jsonl(path)?;
    records
        .into_iter()
        .map(|(line, label)| {
            label.validate().map_err(|e| Error::Validation(format!("{}:{line}: {e}", path.display())))?;
            Ok(label)
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[RedundancyLabel]) -> Result<()> {
    write_jsonl(path.as_ref(), labels)
}
