//! Static word vectors, phrase vectors and cosine similarity.
//!
//! Phrase vectors come in two flavors: the plain mean of member word vectors
//! ([`embed_phrase_average`]) and smooth-inverse-frequency weighting with
//! common component removal ([`sif`]). Words missing from a store get a
//! deterministic pseudo-random unit vector derived from a hash of the word, so
//! identical unknown words still compare equal.

pub mod sif;
pub mod word2vec;

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use sif::{embed_phrase_sif, fit_sif, SifContext, DEFAULT_SIF_A};
pub use word2vec::{train_embeddings, Word2VecConfig};

/// Immutable word → vector table with corpus frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    frequencies: Vec<u64>,
    total_count: u64,
}

impl EmbeddingStore {
    /// Builds a store from `(word, vector)` pairs; a repeated word keeps its
    /// last vector.
    pub fn from_vectors<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        let mut store = EmbeddingStore {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            frequencies: Vec::new(),
            total_count: 0,
        };
        for (word, vector) in entries {
            let word = word.into();
            if vector.len() != dim {
                return Err(Error::Validation(format!(
                    "vector for {word:?} has {} components, expected {dim}",
                    vector.len()
                )));
            }
            store.insert(word, &vector);
        }
        Ok(store)
    }

    fn insert(&mut self, word: String, vector: &[f64]) -> bool {
        if let Some(&i) = self.index.get(&word) {
            self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
            return false;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
        self.frequencies.push(0);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// In-vocabulary vector, if any.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Vector for any word; unknown words fall back to [`oov_vector`].
    pub fn vector(&self, word: &str) -> Cow<'_, [f64]> {
        match self.get(word) {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(oov_vector(word, self.dim)),
        }
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.frequencies[i])
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    /// Unigram probability `freq / total`; zero when nothing was counted.
    pub fn probability(&self, word: &str) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.frequency(word) as f64 / self.total_count as f64
        }
    }

    /// Replaces the frequency table with counts over `tokens`. Words outside
    /// the vocabulary still count toward the total.
    pub fn with_frequencies<'a>(mut self, tokens: impl IntoIterator<Item = &'a str>) -> Self {
        self.frequencies.iter_mut().for_each(|f| *f = 0);
        self.total_count = 0;
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                self.frequencies[i] += 1;
            }
            self.total_count += 1;
        }
        self
    }

    /// Sets explicit counts; words not listed keep zero.
    pub fn with_counts<'a>(mut self, counts: impl IntoIterator<Item = (&'a str, u64)>) -> Self {
        self.frequencies.iter_mut().for_each(|f| *f = 0);
        self.total_count = 0;
        for (w, c) in counts {
            if let Some(&i) = self.index.get(w) {
                self.frequencies[i] = c;
            }
            self.total_count += c;
        }
        self
    }
}

/// FNV-1a, used only to seed out-of-vocabulary vectors.
fn fnv1a(word: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in word.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Deterministic pseudo-random unit vector for a word missing from the store.
pub fn oov_vector(word: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Similarity(format!("length mismatch: {} vs {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Similarity("cosine of a zero vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Elementwise mean of the member word vectors.
pub fn embed_phrase_average<S: AsRef<str>>(tokens: &[S], store: &EmbeddingStore) -> Vec<f64> {
    let mut out = vec![0.0; store.dim()];
    if tokens.is_empty() {
        return out;
    }
    for t in tokens {
        for (o, x) in out.iter_mut().zip(store.vector(t.as_ref()).iter()) {
            *o += x;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    out
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads the word2vec text format: a `V D` header, then `word v1 .. vD` lines.
pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let mut fields = header.split_whitespace();
    let (Some(v), Some(d), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(parse_err(path, 1, "header must be `<vocab size> <dimension>`"));
    };
    let vocab: usize = v.parse().map_err(|_| parse_err(path, 1, "bad vocabulary size"))?;
    let dim: usize = d.parse().map_err(|_| parse_err(path, 1, "bad dimension"))?;
    if dim == 0 {
        return Err(parse_err(path, 1, "dimension must be positive"));
    }
    let mut store = EmbeddingStore::from_vectors(dim, std::iter::empty::<(String, Vec<f64>)>())?;
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line").to_string();
        let vector: Vec<f64> = parts
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, lineno, format!("bad number: {e}")))?;
        if vector.len() != dim {
            return Err(parse_err(
                path,
                lineno,
                format!("{word:?} has {} values, header says {dim}", vector.len()),
            ));
        }
        if !store.insert(word.clone(), &vector) {
            warn!("{}:{lineno}: duplicate word {word:?}; last occurrence wins", path.display());
        }
        rows += 1;
    }
    if rows != vocab {
        warn!("{}: header announces {vocab} words, found {rows}", path.display());
    }
    Ok(store)
}

pub fn write_word_vectors(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", store.len(), store.dim()).map_err(io)?;
    for word in store.words() {
        write!(out, "{word}").map_err(io)?;
        for x in store.get(word).expect("listed word") {
            write!(out, " {x}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}
