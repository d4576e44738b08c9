//! Dissection of an extraction into atomic test tuples, one group per
//! Component.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityCategory, Extraction, RelationCategory};
use crate::preprocess::TokenizedCase;

/// `<Component, Behavior, Prerequisite, Manner, Constraint>`; `None` is NULL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestTuple {
    pub component: Vec<String>,
    pub behavior: Option<Vec<String>>,
    pub prerequisite: Option<Vec<String>>,
    pub manner: Option<Vec<String>>,
    pub constraint: Option<Vec<String>>,
}

impl TestTuple {
    pub fn new(component: &str) -> Self {
        TestTuple {
            component: words(component),
            behavior: None,
            prerequisite: None,
            manner: None,
            constraint: None,
        }
    }

    pub fn with(mut self, slot: EntityCategory, value: &str) -> Self {
        *self.slot_mut(slot) = Some(words(value));
        self
    }

    /// Slot value; the Component slot is never NULL.
    pub fn slot(&self, slot: EntityCategory) -> Option<&[String]> {
        match slot {
            EntityCategory::Component => Some(&self.component),
            EntityCategory::Behavior => self.behavior.as_deref(),
            EntityCategory::Prerequisite => self.prerequisite.as_deref(),
            EntityCategory::Manner => self.manner.as_deref(),
            EntityCategory::Constraint => self.constraint.as_deref(),
        }
    }

    fn slot_mut(&mut self, slot: EntityCategory) -> &mut Option<Vec<String>> {
        match slot {
            EntityCategory::Component => panic!("the Component slot is not optional"),
            EntityCategory::Behavior => &mut self.behavior,
            EntityCategory::Prerequisite => &mut self.prerequisite,
            EntityCategory::Manner => &mut self.manner,
            EntityCategory::Constraint => &mut self.constraint,
        }
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

impl fmt::Display for TestTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, slot) in EntityCategory::ALL.into_iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match self.slot(slot) {
                Some(w) => write!(f, "\"{}\"", w.join(" "))?,
                None => f.write_str("NULL")?,
            }
        }
        f.write_str(">")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dissection {
    pub tuples: Vec<TestTuple>,
    /// Set when the extraction has no Component, so the case cannot be compared.
    pub flagged: bool,
}

/// Builds the tuples of one test case.
///
/// Each Component yields one tuple per associated Behavior (or a single tuple
/// with a NULL Behavior when it has none), and every tuple of that Component
/// carries the same Prerequisite, Manner and Constraint. When several entities
/// compete for one of those slots, the relation with the highest score wins;
/// unscored (gold or imported) relations keep the first listed.
pub fn dissect(tokens: &TokenizedCase, extraction: &Extraction) -> Dissection {
    let text = |i: usize| extraction.entity_tokens(tokens, i).to_vec();
    let mut tuples = Vec::new();
    let mut any_component = false;
    for (ci, _) in extraction.entities_of(EntityCategory::Component) {
        any_component = true;
        let related = |category: RelationCategory| {
            extraction
                .relations
                .iter()
                .filter(move |r| r.component == ci && r.category == category)
        };
        let single = |category: RelationCategory| {
            let mut best: Option<(usize, Option<f64>)> = None;
            let mut count = 0;
            for r in related(category) {
                count += 1;
                let better = match (best, r.score) {
                    (None, _) => true,
                    (Some((_, Some(b))), Some(s)) => s > b,
                    _ => false,
                };
                if better {
                    best = Some((r.head, r.score));
                }
            }
            if count > 1 {
                warn!(
                    "component {:?} has {count} {category} relations; keeping one",
                    text(ci).join(" ")
                );
            }
            best.map(|(h, _)| text(h))
        };
        let base = TestTuple {
            component: text(ci),
            behavior: None,
            prerequisite: single(RelationCategory::Require),
            manner: single(RelationCategory::Use),
            constraint: single(RelationCategory::Satisfy),
        };
        let behaviors: Vec<Vec<String>> = related(RelationCategory::Act).map(|r| text(r.head)).collect();
        if behaviors.is_empty() {
            tuples.push(base);
        } else {
            tuples.extend(behaviors.into_iter().map(|b| TestTuple {
                behavior: Some(b),
                ..base.clone()
            }));
        }
    }
    Dissection {
        tuples,
        flagged: !any_component,
    }
}
