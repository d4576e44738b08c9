//! Smooth inverse frequency phrase embeddings with common component removal.
//!
//! A phrase vector is the mean of `a / (a + p(w)) * v(w)` over its words, where
//! `p(w)` is the unigram probability. Fitting stacks the weighted vectors of a
//! phrase set and takes the dominant right-singular vector as the common
//! component; embedding subtracts the projection onto it.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{dot, norm, EmbeddingStore};
use crate::error::{Error, Result};

pub const DEFAULT_SIF_A: f64 = 1e-3;

/// Fitted SIF parameters. `principal_component` is `None` when the fit was
/// degenerate; embedding then skips the removal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SifContext {
    pub a: f64,
    pub principal_component: Option<Vec<f64>>,
}

impl SifContext {
    /// A context that only weights words and never removes a component.
    pub fn weights_only(a: f64) -> Self {
        SifContext {
            a,
            principal_component: None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.principal_component.is_none()
    }
}

pub fn sif_weight(word: &str, store: &EmbeddingStore, a: f64) -> f64 {
    a / (a + store.probability(word))
}

/// Weighted mean of word vectors, before component removal.
pub fn weighted_average<S: AsRef<str>>(tokens: &[S], store: &EmbeddingStore, a: f64) -> Vec<f64> {
    let mut out = vec![0.0; store.dim()];
    if tokens.is_empty() {
        return out;
    }
    for t in tokens {
        let w = sif_weight(t.as_ref(), store, a);
        for (o, x) in out.iter_mut().zip(store.vector(t.as_ref()).iter()) {
            *o += w * x;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Fits the common component over a phrase set.
pub fn fit_sif<S: AsRef<str>>(phrases: &[Vec<S>], store: &EmbeddingStore, a: f64) -> Result<SifContext> {
    if !(a > 0.0) {
        return Err(Error::Config(format!("SIF smoothing constant must be positive, got {a}")));
    }
    let rows: Vec<Vec<f64>> = phrases
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| weighted_average(p, store, a))
        .collect();
    let distinct = {
        let mut keys: Vec<Vec<&str>> = phrases.iter().map(|p| p.iter().map(AsRef::as_ref).collect()).collect();
        keys.sort();
        keys.dedup();
        keys.len()
    };
    if distinct < 2 {
        warn!("SIF fit over fewer than two distinct phrases; common component removal disabled");
        return Ok(SifContext::weights_only(a));
    }
    let dim = store.dim();
    let x = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    let gram = x.transpose() * &x;
    let eigen = gram.symmetric_eigen();
    let (top, &lambda) = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("dimension is positive");
    if !(lambda > 0.0) {
        warn!("SIF phrase matrix is zero; common component removal disabled");
        return Ok(SifContext::weights_only(a));
    }
    let mut pc: Vec<f64> = eigen.eigenvectors.column(top).iter().copied().collect();
    let n = norm(&pc);
    pc.iter_mut().for_each(|x| *x /= n);
    // fix the sign: largest-magnitude component positive
    let pivot = pc.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
    if pivot < 0.0 {
        pc.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(SifContext {
        a,
        principal_component: Some(pc),
    })
}

/// SIF phrase vector with the common component projected out.
pub fn embed_phrase_sif<S: AsRef<str>>(tokens: &[S], store: &EmbeddingStore, ctx: &SifContext) -> Vec<f64> {
    let mut v = weighted_average(tokens, store, ctx.a);
    if let Some(pc) = &ctx.principal_component {
        let proj = dot(&v, pc);
        v.iter_mut().zip(pc).for_each(|(x, p)| *x -= proj * p);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::cosine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(seed: u64, words: &[&str], dim: usize) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingStore::from_vectors(
            dim,
            words
                .iter()
                .map(|w| (w.to_string(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    /// Dominant right-singular vector by power iteration on XᵀX.
    fn power_iteration(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
        let mut v = vec![1.0; dim];
        for _ in 0..5000 {
            let xv: Vec<f64> = rows.iter().map(|r| dot(r, &v)).collect();
            let mut next = vec![0.0; dim];
            for (r, s) in rows.iter().zip(&xv) {
                for k in 0..dim {
                    next[k] += r[k] * s;
                }
            }
            let n = norm(&next);
            v = next.into_iter().map(|x| x / n).collect();
        }
        v
    }

    const WORDS: &[&str] = &["the", "browser", "application", "mail", "client", "tool", "mouse", "keyboard"];

    fn phrases() -> Vec<Vec<&'static str>> {
        vec![
            vec!["the", "browser"],
            vec!["browser", "application"],
            vec!["mail", "client", "application"],
            vec!["the", "mouse"],
            vec!["keyboard", "tool"],
            vec!["mouse", "tool"],
        ]
    }

    fn counted(store: EmbeddingStore) -> EmbeddingStore {
        store.with_counts([
            ("the", 500),
            ("application", 300),
            ("tool", 200),
            ("browser", 20),
            ("mail", 10),
            ("client", 10),
            ("mouse", 15),
            ("keyboard", 5),
        ])
    }

    #[test]
    fn residuals_orthogonal_to_component() {
        let store = counted(random_store(1, WORDS, 12));
        let ctx = fit_sif(&phrases(), &store, DEFAULT_SIF_A).unwrap();
        let pc = ctx.principal_component.clone().unwrap();
        assert!((norm(&pc) - 1.0).abs() < 1e-12);
        for p in phrases() {
            let v = embed_phrase_sif(&p, &store, &ctx);
            assert!(dot(&v, &pc).abs() < 1e-6 * norm(&v).max(1.0));
        }
    }

    #[test]
    fn component_matches_power_iteration() {
        let store = counted(random_store(9, WORDS, 10));
        let ctx = fit_sif(&phrases(), &store, DEFAULT_SIF_A).unwrap();
        let pc = ctx.principal_component.unwrap();
        let rows: Vec<Vec<f64>> = phrases().iter().map(|p| weighted_average(p, &store, DEFAULT_SIF_A)).collect();
        let oracle = power_iteration(&rows, 10);
        let sign = dot(&pc, &oracle).signum();
        for k in 0..10 {
            assert!((pc[k] - sign * oracle[k]).abs() < 1e-5, "component {k}");
        }
    }

    #[test]
    fn rare_words_weigh_more() {
        let store = counted(random_store(2, WORDS, 4));
        assert!(sif_weight("keyboard", &store, DEFAULT_SIF_A) > sif_weight("application", &store, DEFAULT_SIF_A));
    }

    #[test]
    fn identical_phrases_are_degenerate() {
        let store = counted(random_store(3, WORDS, 4));
        let ctx = fit_sif(&[vec!["browser"], vec!["browser"]], &store, DEFAULT_SIF_A).unwrap();
        assert!(ctx.is_degenerate());
        assert_eq!(
            embed_phrase_sif(&["browser"], &store, &ctx),
            weighted_average(&["browser"], &store, DEFAULT_SIF_A)
        );
    }

    #[test]
    fn frequent_modifier_is_damped() {
        let store = counted(random_store(4, WORDS, 16));
        let ctx = SifContext::weights_only(DEFAULT_SIF_A);
        let plain = cosine(
            &crate::embeddings::embed_phrase_average(&["browser", "application"], &store),
            &crate::embeddings::embed_phrase_average(&["browser"], &store),
        )
        .unwrap();
        let sif = cosine(
            &embed_phrase_sif(&["browser", "application"], &store, &ctx),
            &embed_phrase_sif(&["browser"], &store, &ctx),
        )
        .unwrap();
        assert!(sif > plain);
    }
}
