//! Target serialization, output parsing and greedy generation for each
//! answering strategy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::vocab::{ANSWER, KEYWORDS, QUESTION, RATIONALE};
use crate::data::{tokenize, Image, Vocab};
use crate::error::{Error, Result};
use crate::model::MedThinkModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "none")]
    NoRationale,
    #[serde(rename = "explanation")]
    Explanation,
    #[serde(rename = "reasoning")]
    Reasoning,
    #[serde(rename = "two-stage")]
    TwoStageReasoning,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NoRationale,
        Strategy::Explanation,
        Strategy::Reasoning,
        Strategy::TwoStageReasoning,
    ];

    /// Column label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::NoRationale => "w/o R",
            Strategy::Explanation => "w/ Explanation",
            Strategy::Reasoning => "w/ Reasoning",
            Strategy::TwoStageReasoning => "w/ Two-Stage Reasoning",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoRationale => "none",
            Strategy::Explanation => "explanation",
            Strategy::Reasoning => "reasoning",
            Strategy::TwoStageReasoning => "two-stage",
        }
    }

    pub fn uses_rationale(self) -> bool {
        self != Strategy::NoRationale
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}; expected one of none, explanation, reasoning, two-stage"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub answer: String,
    pub rationale: Option<String>,
    /// Decoded text of every generated token.
    pub raw: String,
    /// Generated ids, including the end token when one was produced.
    pub tokens: Vec<u32>,
    pub parse_ok: bool,
}

/// Everything two-stage generation produced, for inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoStageOutput {
    pub stage1: GenerationOutput,
    pub stage2_input: String,
    pub stage2: GenerationOutput,
    pub output: GenerationOutput,
}

fn require(field: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::contract(format!("{field} must be non-empty")));
    }
    Ok(())
}

/// Decoder target text. The two-stage form is the concatenation of its stage
/// targets so that it parses like any other strategy.
pub fn make_target(strategy: Strategy, answer: &str, rationale: &str) -> Result<String> {
    require("answer", answer)?;
    if strategy.uses_rationale() {
        require("rationale", rationale)?;
    }
    Ok(match strategy {
        Strategy::NoRationale => format!("{ANSWER} {answer}"),
        Strategy::Explanation => format!("{ANSWER} {answer} {RATIONALE} {rationale}"),
        Strategy::Reasoning | Strategy::TwoStageReasoning => {
            format!("{RATIONALE} {rationale} {ANSWER} {answer}")
        }
    })
}

pub fn stage1_target(rationale: &str) -> Result<String> {
    require("rationale", rationale)?;
    Ok(format!("{RATIONALE} {rationale}"))
}

pub fn stage2_target(answer: &str) -> Result<String> {
    require("answer", answer)?;
    Ok(format!("{ANSWER} {answer}"))
}

/// Stage-2 encoder text. Encoding truncates from the tail, which only ever
/// removes rationale tokens once [`check_stage2_fits`] has passed.
pub fn stage2_input(question: &str, rationale: &str) -> String {
    format!("{QUESTION} {question} {RATIONALE} {rationale}")
}

/// The question plus both keywords and the sequence markers must fit in `n_max`.
pub fn check_stage2_fits(question: &str, n_max: usize) -> Result<()> {
    let len = tokenize(question).len() + 4;
    if len > n_max {
        return Err(Error::Length { len, max: n_max });
    }
    Ok(())
}

/// Byte offsets of `keyword` where it stands as a whole whitespace-delimited word.
fn keyword_positions<'a>(text: &'a str, keyword: &'a str) -> impl Iterator<Item = usize> + 'a {
    text.match_indices(keyword).map(|(i, _)| i).filter(move |&i| {
        let before = text[..i].chars().next_back().is_none_or(char::is_whitespace);
        let after = text[i + keyword.len()..].chars().next().is_none_or(char::is_whitespace);
        before && after
    })
}

fn find_keyword(text: &str, keyword: &str, from: usize) -> Option<usize> {
    keyword_positions(text, keyword).find(|&i| i >= from)
}

/// Splits `text` at `first` then `second` (if given). Returns the trimmed
/// segments after each keyword, or `None` unless the text begins with
/// `first` and every segment is non-empty.
fn split_two<'a>(text: &'a str, first: &str, second: Option<&str>) -> Option<(&'a str, Option<&'a str>)> {
    let text = text.trim();
    if find_keyword(text, first, 0)? != 0 {
        return None;
    }
    let body = first.len();
    let (a, b) = match second {
        None => (text[body..].trim(), None),
        Some(kw) => {
            let at = find_keyword(text, kw, body)?;
            (text[body..at].trim(), Some(text[at + kw.len()..].trim()))
        }
    };
    if a.is_empty() || b.is_some_and(str::is_empty) {
        return None;
    }
    Some((a, b))
}

/// Inverse of [`make_target`]. Text that does not follow the strategy's
/// grammar degrades to `parse_ok = false` with the whole text as the answer.
pub fn parse_output(strategy: Strategy, decoded: &str) -> GenerationOutput {
    let parsed = match strategy {
        Strategy::NoRationale => split_two(decoded, ANSWER, None).map(|(a, _)| (a, None)),
        Strategy::Explanation => split_two(decoded, ANSWER, Some(RATIONALE)),
        Strategy::Reasoning | Strategy::TwoStageReasoning => {
            split_two(decoded, RATIONALE, Some(ANSWER)).map(|(r, a)| (a.unwrap_or_default(), Some(r)))
        }
    };
    let (answer, rationale, parse_ok) = match parsed {
        Some((a, r)) => (a.to_string(), r.map(str::to_string), true),
        None => (decoded.trim().to_string(), None, false),
    };
    GenerationOutput {
        answer,
        rationale,
        raw: decoded.to_string(),
        tokens: Vec::new(),
        parse_ok,
    }
}

/// Parses a stage-1 output `Rationale: {R}`. The rationale is the text after
/// the keyword, or the whole text when the keyword is missing.
pub fn parse_stage1(decoded: &str) -> GenerationOutput {
    let (rationale, parse_ok) = match split_two(decoded, RATIONALE, None) {
        Some((r, _)) => (r.to_string(), true),
        None => (decoded.trim().to_string(), false),
    };
    GenerationOutput {
        answer: String::new(),
        rationale: Some(rationale),
        raw: decoded.to_string(),
        tokens: Vec::new(),
        parse_ok,
    }
}

/// True if the text contains any strategy keyword as a standalone word.
pub fn contains_keyword(text: &str) -> bool {
    KEYWORDS.iter().any(|kw| keyword_positions(text, kw).next().is_some())
}

fn check_compatible<S: Scalar>(model: &MedThinkModel<S>, vocab: &Vocab) -> Result<()> {
    if model.config().vocab_size != vocab.len() {
        return Err(Error::Checkpoint(format!(
            "model expects {} vocabulary entries, tokenizer has {}",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

fn decode_text<S: Scalar>(
    model: &MedThinkModel<S>,
    vocab: &Vocab,
    input: &str,
    image: &Image,
    max_len: usize,
) -> Result<(String, Vec<u32>)> {
    check_compatible(model, vocab)?;
    let encoded = vocab.encode(input, model.config().n_max)?;
    let tokens = model.greedy_decode(encoded.unpadded(), image, max_len)?;
    Ok((vocab.decode(&tokens), tokens))
}

/// Greedy generation for a single-model strategy. For the two-stage
/// strategy this runs only the stage-1 model; see [`two_stage_generate`].
pub fn generate<S: Scalar>(
    model: &MedThinkModel<S>,
    vocab: &Vocab,
    strategy: Strategy,
    question: &str,
    image: &Image,
    max_len: usize,
) -> Result<GenerationOutput> {
    let (raw, tokens) = decode_text(model, vocab, question, image, max_len)?;
    let mut out = if strategy == Strategy::TwoStageReasoning {
        parse_stage1(&raw)
    } else {
        parse_output(strategy, &raw)
    };
    out.tokens = tokens;
    Ok(out)
}

/// Stage 1 produces R from the question; stage 2 answers from
/// `Question: {T} Rationale: {R}`. The returned rationale is stage 1's R.
pub fn two_stage_generate<S: Scalar>(
    stage1: &MedThinkModel<S>,
    stage2: &MedThinkModel<S>,
    vocab: &Vocab,
    question: &str,
    image: &Image,
    max_len: usize,
) -> Result<TwoStageOutput> {
    check_stage2_fits(question, stage2.config().n_max)?;
    let first = generate(stage1, vocab, Strategy::TwoStageReasoning, question, image, max_len)?;
    let rationale = first.rationale.clone().unwrap_or_default();
    let input = stage2_input(question, &rationale);
    let (raw, tokens) = decode_text(stage2, vocab, &input, image, max_len)?;
    let mut second = parse_output(Strategy::NoRationale, &raw);
    second.tokens = tokens;
    let output = GenerationOutput {
        answer: second.answer.clone(),
        rationale: Some(rationale),
        raw: format!("{} {}", first.raw, second.raw),
        tokens: first.tokens.iter().chain(&second.tokens).copied().collect(),
        parse_ok: first.parse_ok && second.parse_ok,
    };
    Ok(TwoStageOutput {
        stage1: first,
        stage2_input: input,
        stage2: second,
        output,
    })
}
