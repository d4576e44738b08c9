//! Span-based joint entity and relation extraction over static word vectors.
//!
//! Every contiguous chunk of up to `span_max_len` tokens inside one sentence is
//! a candidate. A candidate is max-pooled over its word vectors, concatenated
//! with the mean vector of the whole case, and scored by a linear softmax head
//! over the five entity categories plus Non. Relation candidates pair a
//! non-Component entity `E_i` with a Component `E_j`; the relation head sees the
//! averaged words before `E_i`, `E_i` itself, the words between the two, and
//! `E_j`. Classes the head category cannot take are masked out.
//!
//! Token vectors come from a [`TokenEncoder`]: the embedding store's vector
//! followed by a fixed hash-seeded identity vector, so that words the store
//! places close together stay distinguishable to the linear heads.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    read_extractions, AnnotatedCorpus, Corpus, EntityAnnotation, EntityCategory, Extraction, Provenance,
    RelationAnnotation, RelationCategory, MAX_SPAN_LEN,
};
use crate::embeddings::{oov_vector, EmbeddingStore};
use crate::error::{Error, Result};
use crate::preprocess::TokenizedCase;

/// Entity classes: the five categories in declaration order, then Non.
pub const ENTITY_CLASSES: usize = 6;
pub const ENTITY_NON: usize = 5;
/// Relation classes: Act, Require, Use, Satisfy, then Non.
pub const RELATION_CLASSES: usize = 5;
pub const RELATION_NON: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSpan {
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub pooled_vector: Vec<f64>,
}

impl CandidateSpan {
    fn annotation(&self, category: EntityCategory) -> EntityAnnotation {
        EntityAnnotation {
            sentence_index: self.sentence_index,
            token_start: self.token_start,
            token_end: self.token_end,
            category,
        }
    }
}

/// Static token encoder over an embedding store.
#[derive(Debug, Clone, Copy)]
pub struct TokenEncoder<'a> {
    store: &'a EmbeddingStore,
    identity_dim: usize,
}

impl<'a> TokenEncoder<'a> {
    pub fn new(store: &'a EmbeddingStore, identity_dim: usize) -> Self {
        TokenEncoder { store, identity_dim }
    }

    pub fn dim(&self) -> usize {
        self.store.dim() + self.identity_dim
    }

    pub fn vector(&self, word: &str) -> Vec<f64> {
        let mut v = self.store.vector(word).into_owned();
        if self.identity_dim > 0 {
            v.extend(oov_vector(word, self.identity_dim));
        }
        v
    }

    /// Mean token vector; the zero vector for no tokens.
    pub fn average<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for t in tokens {
            for (o, x) in out.iter_mut().zip(self.vector(t.as_ref())) {
                *o += x;
            }
        }
        if !tokens.is_empty() {
            let n = tokens.len() as f64;
            out.iter_mut().for_each(|x| *x /= n);
        }
        out
    }
}

/// `(sentence, start, end)` of every candidate span, sentence by sentence,
/// shortest spans first.
pub fn span_bounds(case: &TokenizedCase, max_len: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (s, sentence) in case.sentences.iter().enumerate() {
        let n = sentence.len();
        for len in 1..=max_len.min(n) {
            for start in 0..=n - len {
                out.push((s, start, start + len - 1));
            }
        }
    }
    out
}

fn max_pool<'a>(vectors: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; dim];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o = o.max(*x);
        }
    }
    out
}

/// Word vectors of each sentence, looked up once.
fn sentence_vectors(case: &TokenizedCase, encoder: &TokenEncoder) -> Vec<Vec<Vec<f64>>> {
    case.sentences
        .iter()
        .map(|s| s.iter().map(|w| encoder.vector(w)).collect())
        .collect()
}

fn pooled_spans(
    case: &TokenizedCase,
    vectors: &[Vec<Vec<f64>>],
    dim: usize,
    max_len: usize,
) -> Vec<CandidateSpan> {
    span_bounds(case, max_len)
        .into_iter()
        .map(|(s, start, end)| CandidateSpan {
            sentence_index: s,
            token_start: start,
            token_end: end,
            pooled_vector: max_pool(vectors[s][start..=end].iter().map(Vec::as_slice), dim),
        })
        .collect()
}

/// All candidate spans with their max-pooled vectors. Spans never cross a
/// sentence boundary, so they never contain the separator.
pub fn enumerate_spans(case: &TokenizedCase, encoder: &TokenEncoder, max_len: usize) -> Vec<CandidateSpan> {
    pooled_spans(case, &sentence_vectors(case, encoder), encoder.dim(), max_len)
}

/// Uniform mean of every token vector in the case, separators excluded.
pub fn global_context(case: &TokenizedCase, encoder: &TokenEncoder) -> Vec<f64> {
    let tokens: Vec<&str> = case.tokens().collect();
    encoder.average(&tokens)
}

/// Softmax over the unmasked entries; masked entries get probability 0.
pub fn masked_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |k: usize| mask.is_none_or(|m| m[k]);
    let max = (0..logits.len())
        .filter(|&k| allowed(k))
        .map(|k| logits[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = (0..logits.len())
        .map(|k| if allowed(k) { (logits[k] - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

/// First index of the largest value, so ties go to the earlier class.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..p.len() {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// A dense layer `outputs × inputs`, weights row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGradient {
    fn zeros(head: &LinearHead) -> Self {
        HeadGradient {
            weights: vec![0.0; head.weights.len()],
            bias: vec![0.0; head.bias.len()],
        }
    }
}

impl LinearHead {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LinearHead {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn random(inputs: usize, outputs: usize, scale: f64, rng: &mut impl Rng) -> Self {
        LinearHead {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-scale..scale)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::Model(format!(
                "head of shape {}x{} has {} weights and {} biases",
                self.outputs,
                self.inputs,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs)
            .map(|k| {
                let row = &self.weights[k * self.inputs..(k + 1) * self.inputs];
                self.bias[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
        masked_softmax(&self.logits(x), mask)
    }

    /// Cross-entropy of `target` under the (masked) softmax.
    pub fn loss(&self, x: &[f64], target: usize, mask: Option<&[bool]>) -> f64 {
        -self.probabilities(x, mask)[target].ln()
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn loss_and_gradient(&self, x: &[f64], target: usize, mask: Option<&[bool]>) -> (f64, HeadGradient) {
        let mut grad = HeadGradient::zeros(self);
        let loss = self.accumulate(x, target, mask, &mut grad);
        (loss, grad)
    }

    fn accumulate(&self, x: &[f64], target: usize, mask: Option<&[bool]>, grad: &mut HeadGradient) -> f64 {
        let p = self.probabilities(x, mask);
        for k in 0..self.outputs {
            let g = p[k] - if k == target { 1.0 } else { 0.0 };
            if g == 0.0 {
                continue;
            }
            grad.bias[k] += g;
            let row = &mut grad.weights[k * self.inputs..(k + 1) * self.inputs];
            for (r, v) in row.iter_mut().zip(x) {
                *r += g * v;
            }
        }
        -p[target].ln()
    }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut i = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (w, &gw) in p.iter_mut().zip(g.iter()) {
                self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * gw;
                self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * gw * gw;
                *w -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
                i += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub span_max_len: usize,
    pub c0_window: usize,
    pub c1_cap: usize,
    /// Length of the identity part of each token vector.
    pub identity_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sampled non-entity spans (and non-related pairs) per gold example.
    pub neg_ratio: usize,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            span_max_len: MAX_SPAN_LEN,
            c0_window: 5,
            c1_cap: 20,
            identity_dim: 256,
            learning_rate: 0.01,
            epochs: 100,
            neg_ratio: 3,
            seed: 1,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.span_max_len == 0 || self.span_max_len > MAX_SPAN_LEN {
            return Err(Error::Config(format!(
                "span_max_len must lie in 1..={MAX_SPAN_LEN}, got {}",
                self.span_max_len
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionModel {
    pub dim: usize,
    pub entity_head: LinearHead,
    pub relation_head: LinearHead,
    pub config: ExtractionConfig,
}

fn relation_mask(head: EntityCategory) -> [bool; RELATION_CLASSES] {
    let mut mask = [false; RELATION_CLASSES];
    mask[RELATION_NON] = true;
    if let Some(r) = head.relation() {
        mask[r.index()] = true;
    }
    mask
}

/// Position of each token in the separator-delimited sequence.
fn flat_index(case: &TokenizedCase, sentence: usize, token: usize) -> usize {
    case.sentence_offset(sentence) + sentence + token
}

/// Relation head input `[V(C0); V(E_i); V(C1); V(E_j)]` where `E_i` is the
/// non-Component entity and `E_j` the Component. `C0` is up to `c0_window`
/// words of `E_i`'s sentence right before it; `C1` is the first `c1_cap`
/// tokens strictly between the two entities, separators included. Empty
/// windows give zero vectors.
pub fn relation_features(
    case: &TokenizedCase,
    encoder: &TokenEncoder,
    head: &EntityAnnotation,
    component: &EntityAnnotation,
    c0_window: usize,
    c1_cap: usize,
) -> Vec<f64> {
    let sentence = &case.sentences[head.sentence_index];
    let c0 = &sentence[head.token_start.saturating_sub(c0_window)..head.token_start];
    let span = |e: &EntityAnnotation| &case.sentences[e.sentence_index][e.token_start..=e.token_end];
    let (hs, he) = (
        flat_index(case, head.sentence_index, head.token_start),
        flat_index(case, head.sentence_index, head.token_end),
    );
    let (cs, ce) = (
        flat_index(case, component.sentence_index, component.token_start),
        flat_index(case, component.sentence_index, component.token_end),
    );
    let between = if he < cs { he + 1..cs } else { ce + 1..hs.max(ce + 1) };
    let c1: Vec<&str> = case.sep_sequence[between]
        .iter()
        .take(c1_cap)
        .map(String::as_str)
        .collect();
    let mut x = Vec::with_capacity(4 * encoder.dim());
    x.extend(encoder.average(c0));
    x.extend(encoder.average(span(head)));
    x.extend(encoder.average(&c1));
    x.extend(encoder.average(span(component)));
    x
}

impl ExtractionModel {
    pub fn zeros(dim: usize, config: ExtractionConfig) -> Self {
        ExtractionModel {
            dim,
            entity_head: LinearHead::zeros(2 * dim, ENTITY_CLASSES),
            relation_head: LinearHead::zeros(4 * dim, RELATION_CLASSES),
            config,
        }
    }

    fn check(&self) -> Result<()> {
        self.entity_head.check()?;
        self.relation_head.check()?;
        if self.entity_head.inputs != 2 * self.dim
            || self.entity_head.outputs != ENTITY_CLASSES
            || self.relation_head.inputs != 4 * self.dim
            || self.relation_head.outputs != RELATION_CLASSES
        {
            return Err(Error::Model(format!("head shapes do not match dimension {}", self.dim)));
        }
        self.config.validate()
    }

    /// The encoder this model was trained with, over `store`.
    pub fn encoder<'a>(&self, store: &'a EmbeddingStore) -> Result<TokenEncoder<'a>> {
        let encoder = TokenEncoder::new(store, self.config.identity_dim);
        if encoder.dim() != self.dim {
            return Err(Error::Model(format!(
                "model dimension {} does not match embedding dimension {} plus identity dimension {}",
                self.dim,
                store.dim(),
                self.config.identity_dim
            )));
        }
        Ok(encoder)
    }

    /// Distribution over Com, Beh, Pre, Man, Con, Non.
    pub fn classify_entity(&self, pooled: &[f64], global: &[f64]) -> Result<Vec<f64>> {
        if pooled.len() != self.dim || global.len() != self.dim {
            return Err(Error::Model(format!(
                "entity input of {}+{} values for dimension {}",
                pooled.len(),
                global.len(),
                self.dim
            )));
        }
        let x: Vec<f64> = pooled.iter().chain(global).copied().collect();
        Ok(self.entity_head.probabilities(&x, None))
    }

    /// Distribution over Act, Require, Use, Satisfy, Non for one pair, with
    /// the classes `head` cannot take masked to zero.
    pub fn classify_relation(
        &self,
        case: &TokenizedCase,
        store: &EmbeddingStore,
        head: &EntityAnnotation,
        component: &EntityAnnotation,
    ) -> Result<Vec<f64>> {
        let encoder = self.encoder(store)?;
        if component.category != EntityCategory::Component {
            return Err(Error::Model("the second entity of a relation pair must be a Component".into()));
        }
        if head.category == EntityCategory::Component {
            return Err(Error::Model("two Components never form a relation pair".into()));
        }
        let x = relation_features(case, &encoder, head, component, self.config.c0_window, self.config.c1_cap);
        Ok(self.relation_head.probabilities(&x, Some(&relation_mask(head.category))))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: ExtractionModel = serde_json::from_reader(BufReader::new(file))?;
        model.check()?;
        Ok(model)
    }
}

/// Precomputed training view of one case.
struct CaseFeatures {
    spans: Vec<CandidateSpan>,
    global: Vec<f64>,
    /// Class of each span: a gold category index or Non.
    span_class: Vec<usize>,
    relations: Vec<(Vec<f64>, [bool; RELATION_CLASSES], usize)>,
    positives: usize,
}

fn case_features(
    case: &TokenizedCase,
    extraction: &Extraction,
    encoder: &TokenEncoder,
    config: &ExtractionConfig,
) -> CaseFeatures {
    let vectors = sentence_vectors(case, encoder);
    let spans = pooled_spans(case, &vectors, encoder.dim(), config.span_max_len);
    let gold: HashMap<(usize, usize, usize), usize> = extraction
        .entities
        .iter()
        .map(|e| ((e.sentence_index, e.token_start, e.token_end), e.category.index()))
        .collect();
    let span_class = spans
        .iter()
        .map(|s| {
            gold.get(&(s.sentence_index, s.token_start, s.token_end))
                .copied()
                .unwrap_or(ENTITY_NON)
        })
        .collect();
    let related: BTreeSet<(usize, usize)> = extraction.relations.iter().map(|r| (r.head, r.component)).collect();
    let mut relations = Vec::new();
    let mut positives = 0;
    for (c, comp) in extraction.entities_of(EntityCategory::Component) {
        for (h, head) in extraction.entities.iter().enumerate() {
            if head.category == EntityCategory::Component {
                continue;
            }
            let target = if related.contains(&(h, c)) {
                positives += 1;
                head.category.relation().expect("non-component").index()
            } else {
                RELATION_NON
            };
            let x = relation_features(case, encoder, head, comp, config.c0_window, config.c1_cap);
            relations.push((x, relation_mask(head.category), target));
        }
    }
    CaseFeatures {
        global: global_context(case, encoder),
        spans,
        span_class,
        relations,
        positives,
    }
}

/// Trains both heads jointly on the summed cross-entropy, one Adam step per
/// case. Non-entity spans and non-related compatible pairs are re-sampled
/// every epoch at `neg_ratio` per gold example. Returns the model and the mean
/// per-example loss of every epoch.
pub fn train_joint(
    data: &AnnotatedCorpus,
    store: &EmbeddingStore,
    config: &ExtractionConfig,
) -> Result<(ExtractionModel, Vec<f64>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Training("cannot train on an empty corpus".into()));
    }
    if data.extractions.iter().all(|e| e.entities.is_empty()) {
        return Err(Error::Training("training corpus has no gold entities".into()));
    }
    let encoder = TokenEncoder::new(store, config.identity_dim);
    let dim = encoder.dim();
    let features: Vec<CaseFeatures> = data
        .tokenized
        .iter()
        .zip(&data.extractions)
        .map(|(case, ex)| case_features(case, ex, &encoder, config))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ExtractionModel {
        dim,
        entity_head: LinearHead::random(2 * dim, ENTITY_CLASSES, 0.01, &mut rng),
        relation_head: LinearHead::random(4 * dim, RELATION_CLASSES, 0.01, &mut rng),
        config: config.clone(),
    };
    let mut entity_adam = Adam::new(model.entity_head.weights.len() + ENTITY_CLASSES);
    let mut relation_adam = Adam::new(model.relation_head.weights.len() + RELATION_CLASSES);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut input = vec![0.0; 2 * dim];

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &ci in &order {
            let f = &features[ci];
            let mut eg = HeadGradient::zeros(&model.entity_head);
            let gold: Vec<usize> = (0..f.spans.len()).filter(|&i| f.span_class[i] != ENTITY_NON).collect();
            let non: Vec<usize> = (0..f.spans.len()).filter(|&i| f.span_class[i] == ENTITY_NON).collect();
            let k = (config.neg_ratio * gold.len().max(1)).min(non.len());
            let negatives: Vec<usize> = non.choose_multiple(&mut rng, k).copied().collect();
            input[dim..].copy_from_slice(&f.global);
            for &i in gold.iter().chain(&negatives) {
                input[..dim].copy_from_slice(&f.spans[i].pooled_vector);
                total += model.entity_head.accumulate(&input, f.span_class[i], None, &mut eg);
                count += 1;
            }

            let mut rg = HeadGradient::zeros(&model.relation_head);
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                (0..f.relations.len()).partition(|&i| f.relations[i].2 != RELATION_NON);
            let k = (config.neg_ratio * f.positives.max(1)).min(neg.len());
            let sampled: Vec<usize> = neg.choose_multiple(&mut rng, k).copied().collect();
            for &i in pos.iter().chain(&sampled) {
                let (x, mask, target) = &f.relations[i];
                total += model.relation_head.accumulate(x, *target, Some(mask), &mut rg);
                count += 1;
            }

            let head = &mut model.entity_head;
            entity_adam.step(
                &mut [&mut head.weights, &mut head.bias],
                &[&eg.weights, &eg.bias],
                config.learning_rate,
            );
            if !pos.is_empty() || !sampled.is_empty() {
                let head = &mut model.relation_head;
                relation_adam.step(
                    &mut [&mut head.weights, &mut head.bias],
                    &[&rg.weights, &rg.bias],
                    config.learning_rate,
                );
            }
        }
        trace.push(total / count.max(1) as f64);
    }
    Ok((model, trace))
}

/// Runs the model over one case.
///
/// Spans whose argmax is not Non are accepted greedily by descending
/// probability, longer spans first on ties; a span overlapping an accepted
/// one is dropped. Every accepted non-Component entity is then paired with
/// every accepted Component, and pairs whose argmax is not Non become
/// relations scored by their probability.
pub fn extract(case: &TokenizedCase, model: &ExtractionModel, store: &EmbeddingStore) -> Result<Extraction> {
    let encoder = model.encoder(store)?;
    let spans = enumerate_spans(case, &encoder, model.config.span_max_len);
    let global = global_context(case, &encoder);
    let mut candidates = Vec::new();
    for span in &spans {
        let p = model.classify_entity(&span.pooled_vector, &global)?;
        let class = argmax(&p);
        if class != ENTITY_NON {
            candidates.push((span.annotation(EntityCategory::ALL[class]), p[class]));
        }
    }
    candidates.sort_by(|(a, pa), (b, pb)| {
        pb.total_cmp(pa)
            .then(b.len().cmp(&a.len()))
            .then((a.sentence_index, a.token_start).cmp(&(b.sentence_index, b.token_start)))
    });
    let mut entities: Vec<EntityAnnotation> = Vec::new();
    for (e, _) in candidates {
        if !entities.iter().any(|x| x.overlaps(&e)) {
            entities.push(e);
        }
    }
    entities.sort_by_key(|e| (e.sentence_index, e.token_start));

    let mut relations = Vec::new();
    for (c, comp) in entities.iter().enumerate() {
        if comp.category != EntityCategory::Component {
            continue;
        }
        for (h, head) in entities.iter().enumerate() {
            if head.category == EntityCategory::Component {
                continue;
            }
            let p = model.classify_relation(case, store, head, comp)?;
            let class = argmax(&p);
            if class != RELATION_NON {
                relations.push(RelationAnnotation {
                    head: h,
                    component: c,
                    category: RelationCategory::ALL[class],
                    score: Some(p[class]),
                });
            }
        }
    }
    relations.sort_by_key(|r| (r.component, r.head));
    Ok(Extraction {
        entities,
        relations,
        provenance: Provenance::Model,
    })
}

/// Extracts every case of a tokenized corpus.
pub fn extract_corpus(
    corpus: &Corpus,
    tokenized: &[TokenizedCase],
    model: &ExtractionModel,
    store: &EmbeddingStore,
) -> Result<AnnotatedCorpus> {
    let extractions = tokenized
        .iter()
        .map(|t| extract(t, model, store))
        .collect::<Result<Vec<_>>>()?;
    AnnotatedCorpus::new(corpus.clone(), extractions)
}

/// Reads extractions produced elsewhere, validated like gold annotations.
pub fn import_extractions(path: impl AsRef<Path>, corpus: &Corpus) -> Result<AnnotatedCorpus> {
    read_extractions(path, corpus, Provenance::Imported)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthSpec};
    use crate::embeddings::{train_embeddings, Word2VecConfig};
    use crate::preprocess::{tokenize_text, SEP};
    use proptest::prelude::*;
    use rand::Rng;

    fn store(words: &[&str], dim: usize, seed: u64) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingStore::from_vectors(
            dim,
            words
                .iter()
                .map(|w| (w.to_string(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn plain() -> ExtractionConfig {
        ExtractionConfig {
            identity_dim: 0,
            ..ExtractionConfig::default()
        }
    }

    fn brute_force_spans(lengths: &[usize], max_len: usize) -> usize {
        let mut n = 0;
        for &len in lengths {
            for i in 0..len {
                for j in i..len {
                    if j - i < max_len {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    #[test]
    fn span_counts() {
        let three = tokenize_text("a b c");
        assert_eq!(span_bounds(&three, 10).len(), 6);
        let twelve = tokenize_text("a b c d e f g h i j k l");
        assert_eq!(span_bounds(&twelve, 10).len(), brute_force_spans(&[12], 10));
        assert_eq!(span_bounds(&twelve, 10).len(), 75);
    }

    #[test]
    fn spans_stay_inside_sentences() {
        let case = tokenize_text("Open the file manager. Close the browser");
        let s = store(&["open", "the", "file", "manager", "close", "browser"], 4, 1);
        for span in enumerate_spans(&case, &TokenEncoder::new(&s, 3), 10) {
            let tokens = case.span(span.sentence_index, span.token_start, span.token_end).unwrap();
            assert!(!tokens.iter().any(|t| t == SEP));
        }
    }

    #[test]
    fn pooled_vector_is_elementwise_max() {
        let case = tokenize_text("visit history");
        let s = store(&["visit", "history"], 5, 2);
        let spans = enumerate_spans(&case, &TokenEncoder::new(&s, 0), 10);
        let both = spans.iter().find(|sp| sp.token_start == 0 && sp.token_end == 1).unwrap();
        let (a, b) = (s.get("visit").unwrap(), s.get("history").unwrap());
        for k in 0..5 {
            assert_eq!(both.pooled_vector[k], a[k].max(b[k]));
        }
    }

    #[test]
    fn global_context_is_token_mean() {
        let s = store(&["browse", "the", "visit", "history"], 4, 3);
        let e = TokenEncoder::new(&s, 2);
        let one = tokenize_text("browse");
        assert_eq!(global_context(&one, &e), e.vector("browse"));
        assert_eq!(&e.vector("browse")[..4], s.get("browse").unwrap());
        let a = global_context(&tokenize_text("browse the visit history"), &e);
        let b = global_context(&tokenize_text("history visit. the browse"), &e);
        let words = ["browse", "the", "visit", "history"];
        assert_eq!(&a[..4], crate::embeddings::embed_phrase_average(&words, &s).as_slice());
        for k in 0..6 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = ExtractionModel::zeros(3, plain());
        let p = model.classify_entity(&[0.1, 0.2, 0.3], &[1.0, 0.0, -1.0]).unwrap();
        for x in &p {
            assert!((x - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!(matches!(model.classify_entity(&[0.1], &[0.0; 3]), Err(Error::Model(_))));

        let case = tokenize_text("open the browser");
        let s = store(&["open", "the", "browser"], 3, 4);
        let beh = EntityAnnotation {
            sentence_index: 0,
            token_start: 0,
            token_end: 0,
            category: EntityCategory::Behavior,
        };
        let com = EntityAnnotation {
            sentence_index: 0,
            token_start: 2,
            token_end: 2,
            category: EntityCategory::Component,
        };
        let p = model.classify_relation(&case, &s, &beh, &com).unwrap();
        assert_eq!(p, vec![0.5, 0.0, 0.0, 0.0, 0.5]);
        assert!(model.classify_relation(&case, &s, &com, &com).is_err());
    }

    #[test]
    fn relation_windows() {
        // e_i = "mouse" (Manner) after e_j = "browser"; C1 is "using"
        let case = tokenize_text("open the browser using mouse");
        let s = store(&["open", "the", "browser", "using", "mouse"], 2, 5);
        let man = EntityAnnotation {
            sentence_index: 0,
            token_start: 4,
            token_end: 4,
            category: EntityCategory::Manner,
        };
        let com = EntityAnnotation {
            sentence_index: 0,
            token_start: 2,
            token_end: 2,
            category: EntityCategory::Component,
        };
        let e = TokenEncoder::new(&s, 0);
        let x = relation_features(&case, &e, &man, &com, 2, 20);
        let c0 = e.average(&["browser", "using"]);
        assert_eq!(&x[0..2], c0.as_slice());
        assert_eq!(&x[2..4], s.get("mouse").unwrap());
        assert_eq!(&x[4..6], s.get("using").unwrap());
        assert_eq!(&x[6..8], s.get("browser").unwrap());

        // across sentences the separator sits inside C1
        let case = tokenize_text("open the browser. use mouse");
        let man = EntityAnnotation {
            sentence_index: 1,
            token_start: 1,
            token_end: 1,
            category: EntityCategory::Manner,
        };
        let x = relation_features(&case, &e, &man, &com, 5, 20);
        let c1 = e.average(&[SEP, "use"]);
        assert_eq!(&x[4..6], c1.as_slice());
        // adjacent entities: empty C1 is the zero vector
        let adj = EntityAnnotation {
            sentence_index: 0,
            token_start: 1,
            token_end: 1,
            category: EntityCategory::Constraint,
        };
        let x = relation_features(&case, &e, &adj, &com, 0, 20);
        assert_eq!(&x[0..2], &[0.0, 0.0]);
        assert_eq!(&x[4..6], &[0.0, 0.0]);
    }

    fn finite_difference_check(head: &LinearHead, x: &[f64], target: usize, mask: Option<&[bool]>) {
        let (_, grad) = head.loss_and_gradient(x, target, mask);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
        for i in 0..head.weights.len() {
            let mut up = head.clone();
            up.weights[i] += h;
            let mut down = head.clone();
            down.weights[i] -= h;
            let numeric = (up.loss(x, target, mask) - down.loss(x, target, mask)) / (2.0 * h);
            assert!(rel(grad.weights[i], numeric) < 1e-4, "weight {i}: {} vs {numeric}", grad.weights[i]);
        }
        for k in 0..head.bias.len() {
            let mut up = head.clone();
            up.bias[k] += h;
            let mut down = head.clone();
            down.bias[k] -= h;
            let numeric = (up.loss(x, target, mask) - down.loss(x, target, mask)) / (2.0 * h);
            assert!(rel(grad.bias[k], numeric) < 1e-4, "bias {k}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let dim = 3;
            let head = LinearHead::random(2 * dim, ENTITY_CLASSES, 1.0, &mut rng);
            let x: Vec<f64> = (0..2 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            finite_difference_check(&head, &x, rng.random_range(0..ENTITY_CLASSES), None);

            let head = LinearHead::random(4 * dim, RELATION_CLASSES, 1.0, &mut rng);
            let x: Vec<f64> = (0..4 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cat = EntityCategory::ALL[rng.random_range(1..5)];
            let mask = relation_mask(cat);
            let target = if rng.random::<bool>() { RELATION_NON } else { cat.relation().unwrap().index() };
            finite_difference_check(&head, &x, target, Some(&mask));
        }
    }

    fn small_setup() -> (AnnotatedCorpus, EmbeddingStore) {
        let spec = SynthSpec {
            cases: 60,
            ..SynthSpec::default()
        };
        let synth = generate_synthetic_corpus(3, &spec).unwrap();
        let data = synth.annotated().unwrap();
        let sentences: Vec<Vec<String>> = data.tokenized.iter().flat_map(|t| t.sentences.clone()).collect();
        let store = train_embeddings(
            &sentences,
            &Word2VecConfig {
                dim: 16,
                epochs: 3,
                ..Word2VecConfig::default()
            },
        )
        .unwrap();
        (data, store)
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let (data, store) = small_setup();
        let config = ExtractionConfig {
            epochs: 8,
            identity_dim: 16,
            ..ExtractionConfig::default()
        };
        let (model, trace) = train_joint(&data, &store, &config).unwrap();
        assert!(trace.last().unwrap() < trace.first().unwrap(), "{trace:?}");
        let (again, _) = train_joint(&data, &store, &config).unwrap();
        assert_eq!(model, again);

        let ex = extract(&data.tokenized[0], &model, &store).unwrap();
        ex.validate("TC0001", &data.tokenized[0]).unwrap();
        for r in &ex.relations {
            assert_eq!(ex.entities[r.head].category.relation(), Some(r.category));
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        let (data, store) = small_setup();
        let empty = data.subset(&[]);
        assert!(matches!(
            train_joint(&empty, &store, &ExtractionConfig::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn no_component_means_no_relations() {
        let mut model = ExtractionModel::zeros(4, plain());
        // everything is a Behavior
        model.entity_head.bias[EntityCategory::Behavior.index()] = 5.0;
        let s = store(&["open", "close"], 4, 6);
        let ex = extract(&tokenize_text("open close"), &model, &s).unwrap();
        assert!(!ex.entities.is_empty());
        assert!(ex.relations.is_empty());
    }

    #[test]
    fn overlap_resolution_prefers_longer_on_ties() {
        // zero weights, Component bias: every span ties, the longest wins
        let mut model = ExtractionModel::zeros(6, ExtractionConfig {
            identity_dim: 2,
            ..ExtractionConfig::default()
        });
        model.entity_head.bias[0] = 5.0;
        let s = store(&["visit", "history"], 4, 7);
        let ex = extract(&tokenize_text("visit history"), &model, &s).unwrap();
        assert_eq!(ex.entities.len(), 1);
        assert_eq!((ex.entities[0].token_start, ex.entities[0].token_end), (0, 1));
    }

    #[test]
    fn dimension_mismatch_is_model_error() {
        let model = ExtractionModel::zeros(4, plain());
        let s = store(&["a"], 3, 8);
        assert!(matches!(extract(&tokenize_text("a"), &model, &s), Err(Error::Model(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = ExtractionModel {
            dim: 2,
            entity_head: LinearHead::random(4, ENTITY_CLASSES, 1.0, &mut rng),
            relation_head: LinearHead::random(8, RELATION_CLASSES, 1.0, &mut rng),
            config: ExtractionConfig::default(),
        };
        model.save(&path).unwrap();
        assert_eq!(ExtractionModel::load(&path).unwrap(), model);
        std::fs::write(&path, r#"{"dim":3,"entity_head":{"inputs":4,"outputs":6,"weights":[],"bias":[]},"relation_head":{"inputs":8,"outputs":5,"weights":[],"bias":[]},"config":{"span_max_len":10,"c0_window":5,"c1_cap":20,"identity_dim":0,"learning_rate":0.01,"epochs":1,"neg_ratio":3,"seed":1}}"#).unwrap();
        assert!(matches!(ExtractionModel::load(&path), Err(Error::Model(_))));
    }

    proptest! {
        #[test]
        fn span_count_formula(lengths in proptest::collection::vec(1usize..=30, 1..4), max_len in 1usize..=10) {
            let text = lengths
                .iter()
                .map(|&n| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join(". ");
            let case = tokenize_text(&text);
            let formula: usize = lengths.iter().map(|&n| (1..=max_len.min(n)).map(|l| n - l + 1).sum::<usize>()).sum();
            prop_assert_eq!(span_bounds(&case, max_len).len(), formula);
            prop_assert_eq!(formula, brute_force_spans(&lengths, max_len));
        }

        #[test]
        fn distributions_sum_to_one(
            logits in proptest::collection::vec(-50.0f64..50.0, 5),
            mask_bits in proptest::collection::vec(any::<bool>(), 5),
        ) {
            let mut mask = mask_bits.clone();
            mask[RELATION_NON] = true;
            for p in [masked_softmax(&logits, None), masked_softmax(&logits, Some(&mask))] {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|&x| x >= 0.0));
            }
            let p = masked_softmax(&logits, Some(&mask));
            for k in 0..5 {
                if !mask[k] {
                    prop_assert_eq!(p[k], 0.0);
                }
            }
        }
    }
}
