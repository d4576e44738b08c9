//! Slot-filling generator for labeled test-case corpora.
//!
//! Each case is rendered from a plan of clauses; a clause names one Component
//! and optionally Behaviors, a Prerequisite, a Manner and a Constraint, each
//! drawn from a per-category lexicon. Gold entities and relations fall out of
//! the rendering, and redundancy labels are computed from the plans' canonical
//! tuples, so no hand labeling is involved.
//!
//! Derived cases come in two kinds: paraphrases (same tuples, re-sampled
//! carrier words and Component surface variants, optionally one clause
//! dropped) and near pairs (identical surface, exactly one slot replaced by a
//! lexicon entry sharing no token with the original).

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Direction, EntityAnnotation, EntityCategory, Extraction, Provenance, RedundancyLabel, RelationAnnotation, TestCase};
use crate::error::{Error, Result};
use crate::preprocess::normalize_tokens;

/// Component lexicon. The first variant is canonical; later variants are
/// paraphrases that add a generic head word.
const COMPONENTS: &[&[&str]] = &[
    &["visit history"],
    &["contents of each resource directory"],
    &["gear rotation processing"],
    &["calendar function", "calendar"],
    &["file manager", "file manager application"],
    &["network settings"],
    &["screen brightness"],
    &["bluetooth pairing"],
    &["printer queue"],
    &["login screen"],
    &["audio mixer", "audio mixer application"],
    &["system log"],
    &["font rendering"],
    &["clipboard history"],
    &["usb drive"],
    &["power plan"],
    &["desktop wallpaper"],
    &["input method"],
    &["disk quota"],
    &["firewall rules"],
    &["system clock"],
    &["user accounts"],
    &["terminal emulator", "terminal emulator application"],
    &["package manager"],
    &["preset applications"],
    &["hard disk"],
    &["browser", "browser application"],
    &["mail client", "mail client application"],
    &["image viewer"],
    &["video player", "video player application"],
    &["text editor"],
    &["archive manager"],
];

const BEHAVIORS: &[&str] = &[
    "browse", "switch", "open", "close", "delete", "rename", "copy", "display", "configure", "install", "uninstall",
    "refresh", "mount", "export", "import", "search", "sort", "print", "restart", "lock", "drag", "resize", "minimize",
    "scroll",
];

const PREREQUISITES: &[&str] = &[
    "when drawing 3d graphics",
    "when no network is connected",
    "when the network is connected",
    "before the system installation",
    "after the system installation",
    "while the battery is low",
    "during a kernel update",
    "until the download completes",
    "when no preset applications are installed",
    "when preset applications are installed",
    "after user login",
    "before user login",
    "when the disk is full",
    "when the disk is not full",
    "while playing music",
    "after a cold reboot",
];

/// Prerequisite pairs that differ only in indicative words.
const PREREQUISITE_PARTNERS: &[(usize, usize)] = &[(1, 2), (3, 4), (8, 9), (10, 11), (12, 13)];

const MANNERS: &[&str] = &[
    "mouse",
    "keyboard",
    "touchscreen",
    "stylus",
    "mesa-util tool",
    "unixbench tool",
    "voice command",
    "context menu",
    "command line",
    "remote desktop",
    "trackpad",
    "glmark2 tool",
];

const CONSTRAINTS: &[&str] = &[
    "within 3 seconds",
    "including ftp application",
    "in full screen mode",
    "under heavy load",
    "for all user accounts",
    "in offline mode",
    "at maximum resolution",
    "in english locale",
    "after every change",
    "without data loss",
];

const LEADS: &[&str] = &["test", "verify", "check", "confirm", "ensure"];
const ABILITIES: &[&str] = &["", "whether the user can", "that users can"];
const TRIGGERS: &[&str] = &["using", "via", "through", "by"];

/// Parameters of [`generate_synthetic_corpus`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub cases: usize,
    pub projects: usize,
    /// Number of lead-phrase templates in use (1 to 5).
    pub templates: usize,
    /// Probability that each surface choice of a paraphrase is re-sampled.
    pub paraphrase_rate: f64,
    /// Probability that a new case is a paraphrase of an existing one.
    pub redundancy_rate: f64,
    /// Probability that a new case is a near pair of an existing one.
    pub near_pair_rate: f64,
    /// Probability that a fresh case has two Components.
    pub multi_component_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            cases: 400,
            projects: 4,
            templates: LEADS.len(),
            paraphrase_rate: 0.5,
            redundancy_rate: 0.3,
            near_pair_rate: 0.3,
            multi_component_rate: 0.2,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.templates == 0 || self.templates > LEADS.len() {
            return Err(Error::Config(format!(
                "synthetic spec needs between 1 and {} templates, got {}",
                LEADS.len(),
                self.templates
            )));
        }
        if self.cases == 0 || self.projects == 0 {
            return Err(Error::Config("synthetic spec needs at least one case and one project".into()));
        }
        for (name, rate) in [
            ("paraphrase_rate", self.paraphrase_rate),
            ("redundancy_rate", self.redundancy_rate),
            ("near_pair_rate", self.near_pair_rate),
            ("multi_component_rate", self.multi_component_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        if self.redundancy_rate + self.near_pair_rate > 1.0 {
            return Err(Error::Config("redundancy_rate + near_pair_rate exceeds 1".into()));
        }
        Ok(())
    }
}

/// Lexicon ids of one atomic tuple; identical ids mean identical meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalTuple {
    pub component: usize,
    pub behavior: Option<usize>,
    pub prerequisite: Option<usize>,
    pub manner: Option<usize>,
    pub constraint: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// Same tuples, different wording.
    Paraphrase,
    /// The derived case keeps one clause of a two-clause base.
    Subset,
    /// Exactly one slot replaced.
    NearPair(EntityCategory),
}

/// A constructed pair; `id_a` is the base case, `id_b` the derived one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPair {
    pub id_a: String,
    pub id_b: String,
    pub kind: PairKind,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Gold extraction per case, parallel to the corpus.
    pub extractions: Vec<Extraction>,
    /// One label per same-project pair, `id_a < id_b`.
    pub labels: Vec<RedundancyLabel>,
    pub pairs: Vec<SyntheticPair>,
    /// Canonical tuples per case, parallel to the corpus.
    pub canonical: Vec<Vec<CanonicalTuple>>,
}

impl SyntheticCorpus {
    pub fn annotated(&self) -> Result<super::AnnotatedCorpus> {
        super::AnnotatedCorpus::new(self.corpus.clone(), self.extractions.clone())
    }
}

/// Canonical coverage: every tuple of `b` appears in `a`.
pub(crate) fn canonical_covers(a: &[CanonicalTuple], b: &[CanonicalTuple]) -> bool {
    !a.is_empty() && !b.is_empty() && b.iter().all(|t| a.contains(t))
}

#[derive(Debug, Clone, PartialEq)]
struct Clause {
    component: usize,
    component_variant: usize,
    behaviors: Vec<usize>,
    prerequisite: Option<usize>,
    manner: Option<usize>,
    constraint: Option<usize>,
}

impl Clause {
    fn tuples(&self) -> Vec<CanonicalTuple> {
        let base = CanonicalTuple {
            component: self.component,
            behavior: None,
            prerequisite: self.prerequisite,
            manner: self.manner,
            constraint: self.constraint,
        };
        if self.behaviors.is_empty() {
            vec![base]
        } else {
            self.behaviors
                .iter()
                .map(|&b| CanonicalTuple {
                    behavior: Some(b),
                    ..base
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Single,
    Conjoined,
    TwoSentences,
}

#[derive(Debug, Clone, PartialEq)]
struct Surface {
    lead: usize,
    ability: usize,
    trigger: usize,
    prerequisite_first: bool,
    period: bool,
}

#[derive(Debug, Clone)]
struct Plan {
    clauses: Vec<Clause>,
    layout: Layout,
    surface: Surface,
}

impl Plan {
    fn tuples(&self) -> Vec<CanonicalTuple> {
        let mut out: Vec<CanonicalTuple> = self.clauses.iter().flat_map(Clause::tuples).collect();
        out.dedup();
        out
    }
}

fn tokens(phrase: &str) -> Vec<String> {
    normalize_tokens(phrase)
}

fn lexicon(category: EntityCategory) -> Vec<Vec<&'static str>> {
    match category {
        EntityCategory::Component => COMPONENTS.iter().map(|v| v.to_vec()).collect(),
        EntityCategory::Behavior => BEHAVIORS.iter().map(|w| vec![*w]).collect(),
        EntityCategory::Prerequisite => PREREQUISITES.iter().map(|w| vec![*w]).collect(),
        EntityCategory::Manner => MANNERS.iter().map(|w| vec![*w]).collect(),
        EntityCategory::Constraint => CONSTRAINTS.iter().map(|w| vec![*w]).collect(),
    }
}

/// Surface text of lexicon entry `id`, first variant.
pub fn lexicon_entry(category: EntityCategory, id: usize) -> &'static str {
    lexicon(category)[id][0]
}

fn entry_tokens(category: EntityCategory, id: usize) -> HashSet<String> {
    lexicon(category)[id].iter().flat_map(|v| tokens(v)).collect()
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn pick(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    fn surface(&mut self) -> Surface {
        Surface {
            lead: self.pick(self.spec.templates),
            ability: self.pick(ABILITIES.len()),
            trigger: self.pick(TRIGGERS.len()),
            prerequisite_first: self.chance(0.5),
            period: self.chance(0.7),
        }
    }

    fn clause(&mut self, used_components: &[usize], allow_prerequisite: bool, need_behavior: bool) -> Clause {
        let component = loop {
            let c = self.pick(COMPONENTS.len());
            if !used_components.contains(&c) {
                break c;
            }
        };
        let component_variant = self.pick(COMPONENTS[component].len());
        let mut behaviors = Vec::new();
        if need_behavior || self.chance(0.85) {
            behaviors.push(self.pick(BEHAVIORS.len()));
            if self.chance(0.1) {
                let second = loop {
                    let b = self.pick(BEHAVIORS.len());
                    if b != behaviors[0] {
                        break b;
                    }
                };
                behaviors.push(second);
            }
        }
        let prerequisite = (allow_prerequisite && self.chance(0.4)).then(|| self.pick(PREREQUISITES.len()));
        let manner = self.chance(0.5).then(|| self.pick(MANNERS.len()));
        let constraint = self.chance(0.35).then(|| self.pick(CONSTRAINTS.len()));
        Clause {
            component,
            component_variant,
            behaviors,
            prerequisite,
            manner,
            constraint,
        }
    }

    fn fresh_plan(&mut self) -> Plan {
        let surface = self.surface();
        if self.chance(self.spec.multi_component_rate) {
            let layout = if self.chance(0.5) {
                Layout::Conjoined
            } else {
                Layout::TwoSentences
            };
            let allow_pre = layout == Layout::TwoSentences;
            let first = self.clause(&[], allow_pre, true);
            let second = self.clause(&[first.component], allow_pre, true);
            Plan {
                clauses: vec![first, second],
                layout,
                surface,
            }
        } else {
            Plan {
                clauses: vec![self.clause(&[], true, false)],
                layout: Layout::Single,
                surface,
            }
        }
    }

    fn paraphrase(&mut self, base: &Plan) -> (Plan, PairKind) {
        let mut plan = base.clone();
        let mut kind = PairKind::Paraphrase;
        if plan.clauses.len() == 2 && self.chance(0.5) {
            let keep = self.pick(2);
            plan.clauses = vec![plan.clauses[keep].clone()];
            plan.layout = Layout::Single;
            kind = PairKind::Subset;
        }
        let rate = self.spec.paraphrase_rate;
        let fresh = self.surface();
        if self.chance(rate) {
            plan.surface.lead = fresh.lead;
        }
        if self.chance(rate) {
            plan.surface.ability = fresh.ability;
        }
        if self.chance(rate) {
            plan.surface.trigger = fresh.trigger;
        }
        if self.chance(rate) {
            plan.surface.prerequisite_first = fresh.prerequisite_first;
        }
        if self.chance(rate) {
            plan.surface.period = fresh.period;
        }
        for clause in &mut plan.clauses {
            if self.chance(rate) {
                clause.component_variant = self.pick(COMPONENTS[clause.component].len());
            }
        }
        (plan, kind)
    }

    /// An entry of `category` sharing no token with `current`.
    fn disjoint_entry(&mut self, category: EntityCategory, current: usize, avoid: &[usize]) -> usize {
        let own = entry_tokens(category, current);
        let candidates: Vec<usize> = (0..lexicon(category).len())
            .filter(|&i| i != current && !avoid.contains(&i))
            .filter(|&i| entry_tokens(category, i).is_disjoint(&own))
            .collect();
        *candidates.choose(&mut self.rng).expect("every lexicon entry has a disjoint alternative")
    }

    fn near_pair(&mut self, base: &Plan) -> (Plan, EntityCategory) {
        let mut plan = base.clone();
        let ci = self.pick(plan.clauses.len());
        let other_components: Vec<usize> = plan
            .clauses
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != ci)
            .map(|(_, c)| c.component)
            .collect();
        let clause = &plan.clauses[ci];
        let mut slots = vec![EntityCategory::Component];
        if !clause.behaviors.is_empty() {
            slots.push(EntityCategory::Behavior);
        }
        if clause.prerequisite.is_some() {
            slots.push(EntityCategory::Prerequisite);
        }
        if clause.manner.is_some() {
            slots.push(EntityCategory::Manner);
        }
        if clause.constraint.is_some() {
            slots.push(EntityCategory::Constraint);
        }
        let slot = *slots.choose(&mut self.rng).expect("component always present");
        let clause = plan.clauses[ci].clone();
        let mut changed = clause.clone();
        match slot {
            EntityCategory::Component => {
                changed.component = self.disjoint_entry(slot, clause.component, &other_components);
                changed.component_variant = 0;
            }
            EntityCategory::Behavior => {
                let bi = self.pick(clause.behaviors.len());
                let b = self.disjoint_entry(slot, clause.behaviors[bi], &clause.behaviors);
                changed.behaviors[bi] = b;
            }
            EntityCategory::Prerequisite => {
                let current = clause.prerequisite.expect("slot present");
                let partner = PREREQUISITE_PARTNERS.iter().find_map(|&(x, y)| {
                    if x == current {
                        Some(y)
                    } else if y == current {
                        Some(x)
                    } else {
                        None
                    }
                });
                changed.prerequisite = Some(match partner {
                    Some(p) if self.chance(0.5) => p,
                    _ => self.disjoint_entry(slot, current, &[]),
                });
            }
            EntityCategory::Manner => {
                changed.manner = Some(self.disjoint_entry(slot, clause.manner.expect("slot present"), &[]));
            }
            EntityCategory::Constraint => {
                changed.constraint = Some(self.disjoint_entry(slot, clause.constraint.expect("slot present"), &[]));
            }
        }
        plan.clauses[ci] = changed;
        (plan, slot)
    }
}

/// Token sink that records entity spans while rendering.
struct Renderer {
    sentences: Vec<Vec<String>>,
    text: String,
    entities: Vec<EntityAnnotation>,
    relations: Vec<RelationAnnotation>,
}

impl Renderer {
    fn new() -> Self {
        Renderer {
            sentences: vec![Vec::new()],
            text: String::new(),
            entities: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn word(&mut self, w: &str) {
        let sentence = self.sentences.last_mut().expect("one open sentence");
        if sentence.is_empty() {
            if !self.text.is_empty() {
                self.text.push(' ');
            }
            let mut chars = w.chars();
            if let Some(first) = chars.next() {
                self.text.extend(first.to_uppercase());
                self.text.push_str(chars.as_str());
            }
        } else {
            self.text.push(' ');
            self.text.push_str(w);
        }
        sentence.extend(tokens(w));
    }

    fn phrase(&mut self, p: &str) {
        for w in p.split_whitespace() {
            self.word(w);
        }
    }

    fn entity(&mut self, p: &str, category: EntityCategory) -> usize {
        let sentence_index = self.sentences.len() - 1;
        let token_start = self.sentences[sentence_index].len();
        self.phrase(p);
        let token_end = self.sentences[sentence_index].len() - 1;
        self.entities.push(EntityAnnotation {
            sentence_index,
            token_start,
            token_end,
            category,
        });
        self.entities.len() - 1
    }

    fn punct(&mut self, p: &str) {
        self.text.push_str(p);
    }

    fn end_sentence(&mut self, period: bool) {
        if period {
            self.punct(".");
        } else {
            self.punct(";");
        }
        self.sentences.push(Vec::new());
    }

    fn relate(&mut self, head: usize, component: usize) {
        let category = self.entities[head].category.relation().expect("non-component head");
        self.relations.push(RelationAnnotation {
            head,
            component,
            category,
            score: None,
        });
    }

    /// Renders one clause's body: behaviors, component, manner, constraint.
    fn clause_body(&mut self, clause: &Clause, surface: &Surface) -> (usize, Vec<usize>) {
        let mut heads = Vec::new();
        for (i, &b) in clause.behaviors.iter().enumerate() {
            if i > 0 {
                self.word("and");
            }
            heads.push(self.entity(BEHAVIORS[b], EntityCategory::Behavior));
        }
        self.word("the");
        let component = self.entity(COMPONENTS[clause.component][clause.component_variant], EntityCategory::Component);
        if let Some(m) = clause.manner {
            self.word(TRIGGERS[surface.trigger]);
            heads.push(self.entity(MANNERS[m], EntityCategory::Manner));
        }
        if let Some(c) = clause.constraint {
            heads.push(self.entity(CONSTRAINTS[c], EntityCategory::Constraint));
        }
        (component, heads)
    }

    fn lead(&mut self, surface: &Surface, has_behavior: bool) {
        self.word(LEADS[surface.lead]);
        if has_behavior && !ABILITIES[surface.ability].is_empty() {
            self.phrase(ABILITIES[surface.ability]);
        }
    }

    /// A full sentence for one clause, including its prerequisite.
    fn clause_sentence(&mut self, clause: &Clause, surface: &Surface) {
        let mut pre = None;
        if let (Some(p), true) = (clause.prerequisite, surface.prerequisite_first) {
            pre = Some(self.entity(PREREQUISITES[p], EntityCategory::Prerequisite));
            self.punct(",");
        }
        self.lead(surface, !clause.behaviors.is_empty());
        let (component, mut heads) = self.clause_body(clause, surface);
        if let (Some(p), false) = (clause.prerequisite, surface.prerequisite_first) {
            pre = Some(self.entity(PREREQUISITES[p], EntityCategory::Prerequisite));
        }
        heads.extend(pre);
        for h in heads {
            self.relate(h, component);
        }
    }

    fn render(mut self, plan: &Plan) -> (String, Extraction) {
        let surface = &plan.surface;
        match plan.layout {
            Layout::Single => {
                self.clause_sentence(&plan.clauses[0], surface);
                if surface.period {
                    self.punct(".");
                }
            }
            Layout::TwoSentences => {
                self.clause_sentence(&plan.clauses[0], surface);
                self.end_sentence(surface.period);
                self.clause_sentence(&plan.clauses[1], surface);
                if surface.period {
                    self.punct(".");
                }
            }
            Layout::Conjoined => {
                self.lead(surface, true);
                for (i, clause) in plan.clauses.iter().enumerate() {
                    if i > 0 {
                        self.word("and");
                    }
                    let (component, heads) = self.clause_body(clause, surface);
                    for h in heads {
                        self.relate(h, component);
                    }
                }
                if surface.period {
                    self.punct(".");
                }
            }
        }
        let mut entities_order: Vec<usize> = (0..self.entities.len()).collect();
        entities_order.sort_by_key(|&i| (self.entities[i].sentence_index, self.entities[i].token_start));
        let mut remap = vec![0; self.entities.len()];
        for (new, &old) in entities_order.iter().enumerate() {
            remap[old] = new;
        }
        let entities = entities_order.iter().map(|&i| self.entities[i]).collect();
        let mut relations: Vec<RelationAnnotation> = self
            .relations
            .iter()
            .map(|r| RelationAnnotation {
                head: remap[r.head],
                component: remap[r.component],
                ..*r
            })
            .collect();
        relations.sort_by_key(|r| (r.component, r.head));
        (
            self.text,
            Extraction {
                entities,
                relations,
                provenance: Provenance::Gold,
            },
        )
    }
}

/// Generates a labeled corpus. The output is a pure function of `(seed, spec)`.
pub fn generate_synthetic_corpus(seed: u64, spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut generator = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let width = spec.cases.to_string().len().max(4);
    let mut plans: Vec<Plan> = Vec::with_capacity(spec.cases);
    let mut projects: Vec<usize> = Vec::with_capacity(spec.cases);
    let mut bases: Vec<usize> = Vec::new();
    let mut pairs = Vec::new();
    let id = |i: usize| format!("TC{:0width$}", i + 1);

    while plans.len() < spec.cases {
        let idx = plans.len();
        let roll = generator.rng.random::<f64>();
        if !bases.is_empty() && roll < spec.redundancy_rate + spec.near_pair_rate {
            let base = *bases.choose(&mut generator.rng).expect("non-empty");
            let (plan, kind) = if roll < spec.redundancy_rate {
                generator.paraphrase(&plans[base])
            } else {
                let (plan, slot) = generator.near_pair(&plans[base]);
                (plan, PairKind::NearPair(slot))
            };
            plans.push(plan);
            projects.push(projects[base]);
            pairs.push(SyntheticPair {
                id_a: id(base),
                id_b: id(idx),
                kind,
            });
        } else {
            plans.push(generator.fresh_plan());
            projects.push(generator.pick(spec.projects));
            bases.push(idx);
        }
    }

    let mut cases = Vec::with_capacity(spec.cases);
    let mut extractions = Vec::with_capacity(spec.cases);
    let mut canonical = Vec::with_capacity(spec.cases);
    for (i, plan) in plans.iter().enumerate() {
        let (summary, extraction) = Renderer::new().render(plan);
        cases.push(TestCase {
            id: id(i),
            project: format!("P{:02}", projects[i] + 1),
            summary,
        });
        extractions.push(extraction);
        canonical.push(plan.tuples());
    }
    let corpus = Corpus::new(cases)?;

    let mut labels = Vec::new();
    for i in 0..spec.cases {
        for j in i + 1..spec.cases {
            if projects[i] != projects[j] {
                continue;
            }
            let a_b = canonical_covers(&canonical[i], &canonical[j]);
            let b_a = canonical_covers(&canonical[j], &canonical[i]);
            labels.push(RedundancyLabel {
                id_a: id(i),
                id_b: id(j),
                redundant: a_b || b_a,
                direction: Direction::from_coverage(a_b, b_a),
            });
        }
    }

    Ok(SyntheticCorpus {
        corpus,
        extractions,
        labels,
        pairs,
        canonical,
    })
}
