//! Word-level tokenizer with reserved strategy keywords.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BEGIN: &str = "<s>";
pub const END: &str = "</s>";
pub const UNKNOWN: &str = "<unk>";
pub const ANSWER: &str = "Answer:";
pub const RATIONALE: &str = "Rationale:";
pub const QUESTION: &str = "Question:";

/// Reserved tokens in id order.
pub const RESERVED: [&str; 7] = [PAD, BEGIN, END, UNKNOWN, ANSWER, RATIONALE, QUESTION];

pub const PAD_ID: u32 = 0;
pub const BEGIN_ID: u32 = 1;
pub const END_ID: u32 = 2;
pub const UNKNOWN_ID: u32 = 3;
pub const ANSWER_ID: u32 = 4;
pub const RATIONALE_ID: u32 = 5;
pub const QUESTION_ID: u32 = 6;

/// Strategy delimiters that carry meaning in generated text.
pub const KEYWORDS: [&str; 3] = [ANSWER, RATIONALE, QUESTION];

/// Tokens kept verbatim by the tokenizer. `<unk>` is included so decoded
/// text re-tokenizes to the same ids.
fn is_verbatim(word: &str) -> bool {
    matches!(word, ANSWER | RATIONALE | QUESTION | UNKNOWN)
}

/// Splits text into normalized word tokens. Keywords survive verbatim;
/// everything else is lowercased with leading and trailing punctuation
/// split into single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        if is_verbatim(piece) {
            out.push(piece.to_string());
            continue;
        }
        let lower = piece.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
        if lead == chars.len() {
            out.extend(chars.iter().map(char::to_string));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| c.is_ascii_punctuation()).count();
        out.extend(chars[..lead].iter().map(char::to_string));
        out.push(chars[lead..chars.len() - trail].iter().collect());
        out.extend(chars[chars.len() - trail..].iter().map(char::to_string));
    }
    out
}

/// Answer comparison form: lowercase, trimmed, terminal punctuation removed,
/// internal whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let trimmed = lower.trim().trim_end_matches(|c: char| c.is_ascii_punctuation());
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The text as the tokenizer sees it.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, String> {
        Vocab::from_tokens(tokens).map_err(|e| e.to_string())
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Padded fixed-length encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    /// `true` where the position is padding.
    pub pad_mask: Vec<bool>,
}

impl Encoded {
    pub fn unpadded(&self) -> &[u32] {
        let n = self.pad_mask.iter().take_while(|&&p| !p).count();
        &self.ids[..n]
    }
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(Error::Checkpoint("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Counts tokens in `texts`; ids follow
    /// descending frequency, ties broken lexicographically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::contract("min_count must be at least 1"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in tokenize(text) {
                if !RESERVED.contains(&tok.as_str()) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Word ids without begin/end markers.
    pub fn ids(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// `<s> words </s>`, truncated to `n_max` keeping both markers, then padded.
    pub fn encode(&self, text: &str, n_max: usize) -> Result<Encoded> {
        if n_max < 3 {
            return Err(Error::contract(format!("n_max must be at least 3, got {n_max}")));
        }
        let mut words = self.ids(text);
        words.truncate(n_max - 2);
        let mut ids = Vec::with_capacity(n_max);
        ids.push(BEGIN_ID);
        ids.extend(words);
        ids.push(END_ID);
        let real = ids.len();
        ids.resize(n_max, PAD_ID);
        let pad_mask = (0..n_max).map(|i| i >= real).collect();
        Ok(Encoded { ids, pad_mask })
    }

    /// Joins word tokens, skipping markers and stopping at the first end token.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&id| id != END_ID)
            .filter(|&&id| id != BEGIN_ID && id != PAD_ID)
            .map(|&id| self.token(id).unwrap_or(UNKNOWN))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tokens).expect("strings serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let tokens: Vec<String> =
            serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("vocabulary: {e}")))?;
        Self::from_tokens(tokens)
    }
}
