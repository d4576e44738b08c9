//! Skip-gram with negative sampling, single-threaded and seeded.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingStore;
use crate::error::{Error, Result};

const NEGATIVES: usize = 5;
const UNIGRAM_POWER: f64 = 0.75;
const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            dim: 64,
            window: 3,
            epochs: 50,
            seed: 1,
            learning_rate: 0.025,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains word vectors over `sentences` and fits frequencies from the same
/// tokens. The result depends only on the sentences and `config`.
pub fn train_embeddings<S: AsRef<str>>(sentences: &[Vec<S>], config: &Word2VecConfig) -> Result<EmbeddingStore> {
    if config.dim < 2 {
        return Err(Error::Training(format!("embedding dimension must be at least 2, got {}", config.dim)));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in sentences.iter().flatten() {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Training(format!(
            "vocabulary of {} word(s) is too small to train on",
            counts.len()
        )));
    }
    // frequency descending, then lexicographic
    let mut vocab: Vec<(&str, u64)> = counts.into_iter().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();
    let corpus: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| index[t.as_ref()]).collect())
        .collect();

    let dim = config.dim;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f64> = (0..v * dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect();
    let mut output = vec![0.0; v * dim];

    // cumulative unigram^0.75 table for negative draws
    let mut cumulative = Vec::with_capacity(v);
    let mut acc = 0.0;
    for (_, c) in &vocab {
        acc += (*c as f64).powf(UNIGRAM_POWER);
        cumulative.push(acc);
    }
    let draw = |rng: &mut ChaCha8Rng| {
        let x = rng.random::<f64>() * acc;
        cumulative.partition_point(|&c| c <= x).min(v - 1)
    };

    let total_steps = (config.epochs * corpus.iter().map(Vec::len).sum::<usize>()).max(1);
    let mut step = 0usize;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        for sentence in &corpus {
            for (pos, &center) in sentence.iter().enumerate() {
                let progress = step as f64 / total_steps as f64;
                let lr = config.learning_rate * (1.0 - progress).max(MIN_LR_FRACTION);
                step += 1;
                let shrink = rng.random_range(0..config.window.max(1));
                let reach = config.window.max(1) - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    // the context word's input vector predicts the center word
                    let row = context * dim;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=NEGATIVES {
                        let (target, label) = if k == 0 {
                            (center, 1.0)
                        } else {
                            let t = draw(&mut rng);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out = target * dim;
                        let score: f64 = (0..dim).map(|d| input[row + d] * output[out + d]).sum();
                        let g = (label - sigmoid(score)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[out + d];
                            output[out + d] += g * input[row + d];
                        }
                    }
                    for d in 0..dim {
                        input[row + d] += grad[d];
                    }
                }
            }
        }
    }

    let store = EmbeddingStore::from_vectors(
        dim,
        vocab
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.to_string(), input[i * dim..(i + 1) * dim].to_vec())),
    )?;
    Ok(store.with_counts(vocab.iter().map(|(w, c)| (*w, *c))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::cosine;

    /// "salt" and "pepper" only ever appear in sentences made of each other.
    fn corpus() -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fillers = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"];
        let pair = ["salt", "pepper"];
        let mut out = Vec::new();
        for i in 0..300 {
            let pool: &[&str] = if i % 4 == 0 { &pair } else { &fillers };
            out.push((0..6).map(|_| pool[rng.random_range(0..pool.len())].to_string()).collect());
        }
        out
    }

    fn small_config() -> Word2VecConfig {
        Word2VecConfig {
            dim: 16,
            window: 2,
            epochs: 10,
            seed: 3,
            learning_rate: 0.025,
        }
    }

    #[test]
    fn deterministic() {
        let c = corpus();
        assert_eq!(train_embeddings(&c, &small_config()).unwrap(), train_embeddings(&c, &small_config()).unwrap());
    }

    #[test]
    fn exclusive_cooccurrence_beats_mean_similarity() {
        let store = train_embeddings(&corpus(), &small_config()).unwrap();
        let words = store.words().to_vec();
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                sum += cosine(store.get(&words[i]).unwrap(), store.get(&words[j]).unwrap()).unwrap();
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let pair = cosine(store.get("salt").unwrap(), store.get("pepper").unwrap()).unwrap();
        assert!(pair > mean, "salt/pepper {pair} vs mean {mean}");
    }

    #[test]
    fn frequencies_fitted_and_oov_falls_back() {
        let c = corpus();
        let store = train_embeddings(&c, &small_config()).unwrap();
        assert_eq!(store.total_count() as usize, c.iter().map(Vec::len).sum::<usize>());
        assert!(!store.contains("pumpkin"));
        assert_eq!(store.vector("pumpkin").len(), 16);
    }

    #[test]
    fn tiny_vocabulary_rejected() {
        let c = vec![vec!["only".to_string(), "only".to_string()]];
        assert!(matches!(train_embeddings(&c, &small_config()), Err(Error::Training(_))));
        let empty: Vec<Vec<String>> = vec![];
        assert!(train_embeddings(&empty, &small_config()).is_err());
    }
}
