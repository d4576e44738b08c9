//! Downstream uses of extractions: dependence between cases, grouping by
//! shared prerequisites and completeness reminders.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compare::{candidate_pairs, compare_nounphrase, compare_prerequisite, ComparisonConfig};
use crate::corpus::{AnnotatedCorpus, EntityCategory, Extraction};
use crate::embeddings::EmbeddingStore;
use crate::preprocess::TokenizedCase;

/// A case and its tokens, the unit the application rules read.
#[derive(Debug, Clone, Copy)]
pub struct CaseView<'a> {
    pub tokens: &'a TokenizedCase,
    pub extraction: &'a Extraction,
}

impl<'a> CaseView<'a> {
    pub fn new(tokens: &'a TokenizedCase, extraction: &'a Extraction) -> Self {
        CaseView { tokens, extraction }
    }

    fn phrases(&self, category: EntityCategory) -> impl Iterator<Item = &'a [String]> + '_ {
        self.extraction
            .entities_of(category)
            .map(|(i, _)| self.extraction.entity_tokens(self.tokens, i))
    }
}

/// The Component of `a` and the Manner of `b` that matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceMatch {
    pub component: String,
    pub manner: String,
    pub similarity: f64,
}

/// The first Component of `a` equivalent (noun phrase comparison) to some
/// Manner of `b`, meaning `b` exercises `a`'s function as its means.
pub fn find_dependence(
    a: CaseView<'_>,
    b: CaseView<'_>,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
) -> Option<DependenceMatch> {
    for component in a.phrases(EntityCategory::Component) {
        for manner in b.phrases(EntityCategory::Manner) {
            if let Ok((true, similarity)) = compare_nounphrase(component, manner, store, config) {
                return Some(DependenceMatch {
                    component: component.join(" "),
                    manner: manner.join(" "),
                    similarity,
                });
            }
        }
    }
    None
}

/// True when `b` depends on `a`. Heuristic and directional.
pub fn detect_dependence(a: CaseView<'_>, b: CaseView<'_>, store: &EmbeddingStore, config: &ComparisonConfig) -> bool {
    find_dependence(a, b, store, config).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceRecord {
    /// The case whose Component is used.
    pub prerequisite_case: String,
    /// The case that uses it as its Manner.
    pub dependent_case: String,
    pub component: String,
    pub manner: String,
    pub similarity: f64,
    pub heuristic: bool,
}

/// Dependence in both directions for every pair in scope, sorted by
/// `(prerequisite_case, dependent_case)`.
pub fn dependence_report(data: &AnnotatedCorpus, store: &EmbeddingStore, config: &ComparisonConfig) -> Vec<DependenceRecord> {
    let cases = data.corpus.cases();
    let ids: Vec<(&str, &str)> = cases.iter().map(|c| (c.id.as_str(), c.project.as_str())).collect();
    let view = |id: &str| {
        let i = data.corpus.position(id).expect("id from corpus");
        CaseView::new(&data.tokenized[i], &data.extractions[i])
    };
    let mut out = Vec::new();
    for (x, y) in candidate_pairs(&ids, config.scope) {
        for (a, b) in [(x, y), (y, x)] {
            if let Some(m) = find_dependence(view(a), view(b), store, config) {
                out.push(DependenceRecord {
                    prerequisite_case: a.to_string(),
                    dependent_case: b.to_string(),
                    component: m.component,
                    manner: m.manner,
                    similarity: m.similarity,
                    heuristic: true,
                });
            }
        }
    }
    out.sort_by(|p, q| (&p.prerequisite_case, &p.dependent_case).cmp(&(&q.prerequisite_case, &q.dependent_case)));
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn shares_prerequisite(a: CaseView<'_>, b: CaseView<'_>, store: &EmbeddingStore, config: &ComparisonConfig) -> bool {
    a.phrases(EntityCategory::Prerequisite).any(|p| {
        b.phrases(EntityCategory::Prerequisite)
            .any(|q| matches!(compare_prerequisite(p, q, store, config), Ok((true, _))))
    })
}

/// Connected components of the "some Prerequisite is equivalent" relation.
/// Cases without a Prerequisite are singletons. Groups are sorted internally
/// and by their first id; the grouping is transitive even though the
/// underlying similarity is not.
pub fn group_by_prerequisite(data: &AnnotatedCorpus, store: &EmbeddingStore, config: &ComparisonConfig) -> Vec<Vec<String>> {
    let n = data.len();
    let views: Vec<CaseView<'_>> = data
        .tokenized
        .iter()
        .zip(&data.extractions)
        .map(|(t, e)| CaseView::new(t, e))
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) != find(&mut parent, j) && shares_prerequisite(views[i], views[j], store, config) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(data.corpus.cases()[i].id.clone());
    }
    let mut groups: Vec<Vec<String>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    groups.sort();
    groups
}

/// Categories with no extracted entity, in category order.
pub fn completeness_check(extraction: &Extraction) -> Vec<EntityCategory> {
    EntityCategory::ALL
        .into_iter()
        .filter(|&c| extraction.entities_of(c).next().is_none())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessRecord {
    pub id: String,
    pub missing: Vec<EntityCategory>,
}

/// Cases missing at least one category.
pub fn completeness_report(data: &AnnotatedCorpus) -> Vec<CompletenessRecord> {
    data.corpus
        .cases()
        .iter()
        .zip(&data.extractions)
        .filter_map(|(c, e)| {
            let missing = completeness_check(e);
            (!missing.is_empty()).then(|| CompletenessRecord {
                id: c.id.clone(),
                missing,
            })
        })
        .collect()
}
