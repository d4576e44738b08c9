//! Extraction and detection scoring, train/test splits, ablation and the
//! statistical tests used to compare runs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::compare::{detect_with_tuples, ComparisonConfig, Detection, RedundancyVerdict};
use crate::corpus::{AnnotatedCorpus, Direction, EntityCategory, Extraction, RedundancyLabel, RelationCategory};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::tuples::TestTuple;

/// Counts and the rates derived from them. A rate whose denominator is zero
/// is `None` rather than 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        MetricReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        }
    }

    pub fn add(&self, other: &MetricReport) -> MetricReport {
        MetricReport::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_, self.tn + other.tn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub entities: BTreeMap<EntityCategory, MetricReport>,
    pub entity_micro: MetricReport,
    pub relations: BTreeMap<RelationCategory, MetricReport>,
    pub relation_micro: MetricReport,
}

type SpanKey = (usize, usize, usize);

fn entity_keys(e: &Extraction) -> HashSet<(SpanKey, EntityCategory)> {
    e.entities
        .iter()
        .map(|x| ((x.sentence_index, x.token_start, x.token_end), x.category))
        .collect()
}

fn relation_keys(e: &Extraction) -> HashSet<(SpanKey, SpanKey, EntityCategory, RelationCategory)> {
    e.relations
        .iter()
        .map(|r| {
            let h = &e.entities[r.head];
            let c = &e.entities[r.component];
            (
                (h.sentence_index, h.token_start, h.token_end),
                (c.sentence_index, c.token_start, c.token_end),
                h.category,
                r.category,
            )
        })
        .collect()
}

fn tally<K: Eq + std::hash::Hash, C: Ord + Copy>(
    predicted: &HashSet<K>,
    gold: &HashSet<K>,
    category: impl Fn(&K) -> C,
    counts: &mut BTreeMap<C, (usize, usize, usize)>,
) {
    for k in predicted {
        let c = counts.entry(category(k)).or_default();
        if gold.contains(k) {
            c.0 += 1;
        } else {
            c.1 += 1;
        }
    }
    for k in gold.difference(predicted) {
        counts.entry(category(k)).or_default().2 += 1;
    }
}

fn reports<C: Ord + Copy>(
    all: impl IntoIterator<Item = C>,
    counts: &BTreeMap<C, (usize, usize, usize)>,
) -> (BTreeMap<C, MetricReport>, MetricReport) {
    let mut per = BTreeMap::new();
    let mut micro = MetricReport::from_counts(0, 0, 0, 0);
    for c in all {
        let (tp, fp, fn_) = counts.get(&c).copied().unwrap_or_default();
        let r = MetricReport::from_counts(tp, fp, fn_, 0);
        micro = micro.add(&r);
        per.insert(c, r);
    }
    (per, micro)
}

/// Exact span-and-category matching of entities, and of relations by head
/// span, Component span and category. `predicted` and `gold` are parallel.
pub fn extraction_metrics(predicted: &[Extraction], gold: &[Extraction]) -> Result<ExtractionReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Evaluation(format!(
            "{} predicted extractions for {} gold ones",
            predicted.len(),
            gold.len()
        )));
    }
    let mut entity_counts = BTreeMap::new();
    let mut relation_counts = BTreeMap::new();
    for (p, g) in predicted.iter().zip(gold) {
        tally(&entity_keys(p), &entity_keys(g), |k| k.1, &mut entity_counts);
        tally(&relation_keys(p), &relation_keys(g), |k| k.3, &mut relation_counts);
    }
    let (entities, entity_micro) = reports(EntityCategory::ALL, &entity_counts);
    let (relations, relation_micro) = reports(RelationCategory::ALL, &relation_counts);
    Ok(ExtractionReport {
        entities,
        entity_micro,
        relations,
        relation_micro,
    })
}

/// Outcome of one labeled pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

/// Scores one verdict against its label. A redundant prediction on a
/// redundant pair counts only if it asserts the labeled direction; mutual
/// labels and totally equivalent verdicts accept either direction. A
/// redundant prediction in the wrong direction is a false positive.
pub fn score_pair(verdict: Option<&RedundancyVerdict>, label: &RedundancyLabel) -> PairOutcome {
    let predicted = verdict.is_some_and(|v| v.redundant);
    match (predicted, label.redundant) {
        (false, false) => PairOutcome::TrueNegative,
        (false, true) => PairOutcome::FalseNegative,
        (true, false) => PairOutcome::FalsePositive,
        (true, true) => {
            let v = verdict.expect("predicted redundant");
            let ok = v.totally_equivalent
                || match label.direction {
                    Direction::Mutual => true,
                    Direction::ACoversB => v.a_covers_b,
                    Direction::BCoversA => v.b_covers_a,
                    Direction::None => false,
                };
            if ok {
                PairOutcome::TruePositive
            } else {
                PairOutcome::FalsePositive
            }
        }
    }
}

/// Pair-level metrics on the redundant class. Pairs involving a skipped case
/// count as predicted non-redundant; any other labeled pair without a verdict
/// is an error. Verdicts without a label are ignored.
pub fn detection_metrics(detection: &Detection, labels: &[RedundancyLabel]) -> Result<MetricReport> {
    let verdicts: HashMap<(&str, &str), &RedundancyVerdict> = detection
        .verdicts
        .iter()
        .map(|v| ((v.id_a.as_str(), v.id_b.as_str()), v))
        .collect();
    let skipped: HashSet<&str> = detection.skipped.iter().map(String::as_str).collect();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut missing = Vec::new();
    for label in labels {
        let label = label.canonical();
        let verdict = verdicts.get(&(label.id_a.as_str(), label.id_b.as_str())).copied();
        if verdict.is_none() && !skipped.contains(label.id_a.as_str()) && !skipped.contains(label.id_b.as_str()) {
            missing.push(format!("({}, {})", label.id_a, label.id_b));
            continue;
        }
        match score_pair(verdict, &label) {
            PairOutcome::TruePositive => tp += 1,
            PairOutcome::FalsePositive => fp += 1,
            PairOutcome::FalseNegative => fn_ += 1,
            PairOutcome::TrueNegative => tn += 1,
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        return Err(Error::Evaluation(format!(
            "{} labeled pair(s) have no verdict: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    Ok(MetricReport::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `repeats` random partitions of `0..len`, each with `round(ratio * len)`
/// training indices. Repeat `r` uses stream `r` of the seeded generator.
pub fn split_train_test(len: usize, ratio: f64, seed: u64, repeats: usize) -> Result<Vec<Split>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if len < 5 {
        return Err(Error::Config(format!("cannot split a corpus of {len} cases")));
    }
    let cut = ((ratio * len as f64).round() as usize).clamp(1, len - 1);
    Ok((0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut idx: Vec<usize> = (0..len).collect();
            idx.shuffle(&mut rng);
            let mut train = idx[..cut].to_vec();
            let mut test = idx[cut..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `None` for the full run.
    pub dropped: Option<EntityCategory>,
    pub report: MetricReport,
    pub delta_precision: Option<f64>,
    pub delta_recall: Option<f64>,
    pub delta_f1: Option<f64>,
    pub redundant_pairs: usize,
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

fn redundant_count(d: &Detection) -> usize {
    d.verdicts.iter().filter(|v| v.redundant).count()
}

/// Detection with `drop` left out of tuple comparison, scored against
/// `labels`, with deltas against the full run.
pub fn ablate(
    data: &AnnotatedCorpus,
    tuples: &[Vec<TestTuple>],
    drop: EntityCategory,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
    labels: &[RedundancyLabel],
) -> Result<AblationRow> {
    let full = detection_metrics(&detect_with_tuples(data, tuples, store, config)?, labels)?;
    ablation_row(data, tuples, Some(drop), store, config, labels, &full)
}

fn ablation_row(
    data: &AnnotatedCorpus,
    tuples: &[Vec<TestTuple>],
    drop: Option<EntityCategory>,
    store: &EmbeddingStore,
    config: &ComparisonConfig,
    labels: &[RedundancyLabel],
    full: &MetricReport,
) -> Result<AblationRow> {
    let config = match drop {
        Some(c) => config.clone().without(c),
        None => config.clone(),
    };
    let detection = detect_with_tuples(data, tuples, store, &config)?;
    let report = detection_metrics(&detection, labels)?;
    Ok(AblationRow {
        dropped: drop,
        report,
        delta_precision: delta(report.precision, full.precision),
        delta_recall: delta(report.recall, full.recall),
        delta_f1: delta(report.f1, full.f1),
        redundant_pairs: redundant_count(&detection),
    })
}

/// The full run followed by one row per dropped category.
pub fn ablation_table(
    data: &AnnotatedCorpus,
    tuples: &[Vec<TestTuple>],
    store: &EmbeddingStore,
    config: &ComparisonConfig,
    labels: &[RedundancyLabel],
    drops: &[EntityCategory],
) -> Result<Vec<AblationRow>> {
    let full_detection = detect_with_tuples(data, tuples, store, config)?;
    let full = detection_metrics(&full_detection, labels)?;
    let mut rows = vec![AblationRow {
        dropped: None,
        report: full,
        delta_precision: full.precision.map(|_| 0.0),
        delta_recall: full.recall.map(|_| 0.0),
        delta_f1: full.f1.map(|_| 0.0),
        redundant_pairs: redundant_count(&full_detection),
    }];
    for &d in drops {
        rows.push(ablation_row(data, tuples, Some(d), store, config, labels, &full)?);
    }
    Ok(rows)
}

/// Pearson's r with a two-sided p-value from Student's t with n-2 degrees of
/// freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Statistics(format!("lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Statistics(format!("need at least 3 observations, got {n}")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Statistics("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    if r.abs() == 1.0 {
        return Ok((r, 0.0));
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Statistics(e.to_string()))?;
    Ok((r, (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)))
}

/// Cohen's kappa for two binary raters. Perfect agreement with degenerate
/// marginals is defined as 1.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Statistics(format!(
            "kappa needs two equal non-empty ratings, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe == 1.0 {
        return Ok(1.0);
    }
    Ok((agree - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub u_other: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Average ranks (1-based) of the pooled sample, ties sharing their mean rank.
fn ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (out, tie_term)
}

/// Mann-Whitney U with tie-corrected variance and a continuity-corrected
/// two-sided normal approximation.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Statistics("Mann-Whitney needs two non-empty samples".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (r, tie_term) = ranks(&pooled);
    let r1: f64 = r[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let u_other = n1 * n2 - u;
    let n = n1 + n2;
    let mu = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney {
            u,
            u_other,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(MannWhitney {
        u,
        u_other,
        z,
        p_value: (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0),
    })
}

/// Canonical `(id_a, id_b)` pairs flagged redundant.
pub fn redundant_set(detection: &Detection) -> BTreeSet<(String, String)> {
    detection
        .verdicts
        .iter()
        .filter(|v| v.redundant)
        .map(|v| (v.id_a.clone(), v.id_b.clone()))
        .collect()
}
