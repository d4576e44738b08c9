//! Summary text to token sequences.
//!
//! A summary is split into sentences on terminator punctuation, each sentence
//! is lowercased and tokenized, and the sentences are joined into one flat
//! sequence with [`SEP`] markers between them.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::TestCase;
use crate::error::{Error, Result};

/// Sentence divider in [`TokenizedCase::sep_sequence`]. Normalized tokens never
/// contain brackets, so the marker cannot collide with a real token.
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedCase {
    pub sentences: Vec<Vec<String>>,
    pub sep_sequence: Vec<String>,
}

impl TokenizedCase {
    /// Builds the case from already-normalized sentences, dropping empty ones.
    pub fn from_sentences(sentences: Vec<Vec<String>>) -> Self {
        let sentences: Vec<Vec<String>> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        let mut sep_sequence = Vec::new();
        for (i, sentence) in sentences.iter().enumerate() {
            if i > 0 {
                sep_sequence.push(SEP.to_string());
            }
            sep_sequence.extend(sentence.iter().cloned());
        }
        TokenizedCase {
            sentences,
            sep_sequence,
        }
    }

    /// All tokens in reading order, without separators.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Offset of the first token of `sentence` in the separator-free token order.
    pub fn sentence_offset(&self, sentence: usize) -> usize {
        self.sentences[..sentence].iter().map(Vec::len).sum()
    }

    /// Tokens `start..=end` of one sentence, or `None` when out of bounds.
    pub fn span(&self, sentence: usize, start: usize, end: usize) -> Option<&[String]> {
        let s = self.sentences.get(sentence)?;
        if start > end || end >= s.len() {
            return None;
        }
        Some(&s[start..=end])
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!' | ';')
}

/// Splits text into sentences. A boundary is a terminator (`.`, `?`, `!`, `;`)
/// followed by whitespace or the end of the text; the terminator stays with
/// its sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    if text.trim().is_empty() {
        warn!("sentence splitting: text is empty or whitespace-only");
        return Vec::new();
    }
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_terminator(c) {
            continue;
        }
        let at_boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if at_boundary {
            let end = i + c.len_utf8();
            let sentence = text[start..end].trim();
            if !sentence.is_empty() {
                sentences.push(sentence.to_string());
            }
            start = end;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        sentences.push(rest.to_string());
    }
    sentences
}

/// Lowercases and tokenizes one sentence. Letters and digits are kept, a
/// hyphen is kept only between two word characters, everything else splits.
pub fn normalize_tokens(sentence: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        let trimmed = current.trim_matches('-');
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_string());
        }
        current.clear();
    };
    for c in sentence.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        } else if c == '-' && !current.is_empty() {
            current.push('-');
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

pub fn tokenize_text(text: &str) -> TokenizedCase {
    TokenizedCase::from_sentences(split_sentences(text).iter().map(|s| normalize_tokens(s)).collect())
}

/// Tokenizes a test case summary into the separator-joined sequence.
pub fn assemble_sequence(case: &TestCase) -> Result<TokenizedCase> {
    let tokenized = tokenize_text(&case.summary);
    if tokenized.sentences.is_empty() {
        return Err(Error::Preprocess(format!(
            "summary of test case {:?} has no tokens after normalization",
            case.id
        )));
    }
    Ok(tokenized)
}
