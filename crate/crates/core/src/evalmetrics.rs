//! Closed-end accuracy, BLEU, ROUGE and per-category error reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{normalize_answer, QType, Split, VqaSample};
use crate::error::{Error, Result};
use crate::strategies::{self, GenerationOutput, Strategy};

/// Smoothing value substituted for a zero n-gram precision.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Category label for closed-end items without one.
pub const UNCATEGORIZED: &str = "(none)";

/// Metric tokens: lowercase, ASCII punctuation removed, whitespace split.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub fn closed_accuracy(predictions: &[String], golds: &[String]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} gold answers",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| normalize_answer(p) == normalize_answer(g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Candidate n-grams matched against the reference, each type clipped to its
/// reference count; returns `(matches, candidate n-gram total)`.
pub fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

/// Multiset overlap of n-grams, symmetric in its arguments.
pub fn ngram_overlap(a: &[String], b: &[String], n: usize) -> usize {
    clipped_matches(a, b, n).0
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    /// Precision used at each order after smoothing.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// Set when the candidate was empty and the score defaulted to 0.
    pub empty_candidate: bool,
}

/// Sentence BLEU up to `max_n`. A zero precision becomes [`BLEU_EPSILON`].
/// When neither text has n-grams of some order (both shorter than n), that
/// order repeats the previous precision so identical short texts score 1.
pub fn bleu_n(candidate: &str, reference: &str, max_n: usize) -> Result<BleuScore> {
    if !(1..=4).contains(&max_n) {
        return Err(Error::contract(format!("BLEU order must be 1 to 4, got {max_n}")));
    }
    let cand = metric_tokens(candidate);
    let refs = metric_tokens(reference);
    if cand.is_empty() {
        return Ok(BleuScore {
            score: 0.0,
            precisions: vec![0.0; max_n],
            brevity_penalty: 0.0,
            empty_candidate: true,
        });
    }
    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let (matches, total) = clipped_matches(&cand, &refs, n);
        let p = if total == 0 && refs.len() < n {
            *precisions.last().expect("order 1 always has candidate n-grams")
        } else if matches == 0 {
            BLEU_EPSILON
        } else {
            matches as f64 / total as f64
        };
        precisions.push(p);
    }
    let bp = brevity_penalty(cand.len(), refs.len());
    let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
    Ok(BleuScore {
        score: bp * log_mean.exp(),
        precisions,
        brevity_penalty: bp,
        empty_candidate: false,
    })
}

pub fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    (1.0 - ref_len as f64 / cand_len as f64).exp().min(1.0)
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 for n in {1, 2}.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(Error::contract(format!("ROUGE order must be 1 or 2, got {n}")));
    }
    let cand = metric_tokens(candidate);
    let refs = metric_tokens(reference);
    let (overlap, cand_total) = clipped_matches(&cand, &refs, n);
    Ok(f1(overlap, cand_total, refs.len().saturating_sub(n - 1)))
}

/// ROUGE-L F1 from the token longest common subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = metric_tokens(candidate);
    let refs = metric_tokens(reference);
    f1(lcs_len(&cand, &refs), cand.len(), refs.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryError {
    pub total: usize,
    pub wrong: usize,
}

impl CategoryError {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.wrong as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub closed_count: usize,
    pub open_count: usize,
    pub closed_accuracy: Option<f64>,
    /// Mean sentence BLEU keyed by order "1".."4".
    pub bleu: BTreeMap<String, f64>,
    /// Mean ROUGE F1 keyed by "1", "2", "L".
    pub rouge: BTreeMap<String, f64>,
    pub per_category: BTreeMap<String, CategoryError>,
    pub parse_failures: usize,
    pub empty_candidates: usize,
    pub item_count: BTreeMap<String, usize>,
}

/// Gold sequence an output of `strategy` is compared with on open-end items.
pub fn gold_target(strategy: Strategy, sample: &VqaSample) -> Result<String> {
    let rationale = sample.rationale.as_deref().unwrap_or("");
    if strategy.uses_rationale() && rationale.trim().is_empty() {
        return Err(Error::Dataset(format!("sample {} has no rationale", sample.id)));
    }
    strategies::make_target(strategy, &sample.answer, rationale)
}

/// Scores `outputs[i]` against `samples[i]`.
pub fn evaluate(samples: &[VqaSample], outputs: &[GenerationOutput], strategy: Strategy) -> Result<EvalReport> {
    if samples.len() != outputs.len() {
        return Err(Error::contract(format!(
            "{} outputs for {} samples",
            outputs.len(),
            samples.len()
        )));
    }
    let mut report = EvalReport {
        strategy,
        closed_count: 0,
        open_count: 0,
        closed_accuracy: None,
        bleu: BTreeMap::new(),
        rouge: BTreeMap::new(),
        per_category: BTreeMap::new(),
        parse_failures: outputs.iter().filter(|o| !o.parse_ok).count(),
        empty_candidates: 0,
        item_count: BTreeMap::new(),
    };
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    let mut bleu_sums = [0.0; 4];
    let mut rouge_sums = [0.0; 3];
    for (sample, out) in samples.iter().zip(outputs) {
        let split = match sample.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        *report.item_count.entry(split.into()).or_default() += 1;
        match sample.qtype {
            QType::Closed => {
                report.closed_count += 1;
                let correct = normalize_answer(&out.answer) == normalize_answer(&sample.answer);
                let cat = sample.category.clone().unwrap_or_else(|| UNCATEGORIZED.into());
                let entry = report.per_category.entry(cat).or_insert(CategoryError { total: 0, wrong: 0 });
                entry.total += 1;
                entry.wrong += usize::from(!correct);
                preds.push(out.answer.clone());
                golds.push(sample.answer.clone());
            }
            QType::Open => {
                report.open_count += 1;
                let gold = gold_target(strategy, sample)?;
                for (n, sum) in bleu_sums.iter_mut().enumerate() {
                    let b = bleu_n(&out.raw, &gold, n + 1)?;
                    report.empty_candidates += usize::from(b.empty_candidate && n == 0);
                    *sum += b.score;
                }
                rouge_sums[0] += rouge_n(&out.raw, &gold, 1)?;
                rouge_sums[1] += rouge_n(&out.raw, &gold, 2)?;
                rouge_sums[2] += rouge_l(&out.raw, &gold);
            }
        }
    }
    if !golds.is_empty() {
        report.closed_accuracy = Some(closed_accuracy(&preds, &golds)?);
    }
    if report.open_count > 0 {
        let k = report.open_count as f64;
        for (n, s) in bleu_sums.iter().enumerate() {
            report.bleu.insert((n + 1).to_string(), s / k);
        }
        for (key, s) in ["1", "2", "L"].iter().zip(rouge_sums) {
            report.rouge.insert(key.to_string(), s / k);
        }
    }
    Ok(report)
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

impl EvalReport {
    /// Human-readable table, percentages to two decimals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "strategy: {} ({})", self.strategy.label(), self.strategy);
        let _ = writeln!(s, "items: {} closed, {} open", self.closed_count, self.open_count);
        if let Some(acc) = self.closed_accuracy {
            let _ = writeln!(s, "closed-end accuracy: {}%", pct(acc));
        }
        if !self.bleu.is_empty() {
            let _ = writeln!(s, "open-end scores (%):");
            let _ = writeln!(s, "  {:<8}{:>8}", "metric", "score");
            for (k, v) in &self.bleu {
                let _ = writeln!(s, "  {:<8}{:>8}", format!("BLEU-{k}"), pct(*v));
            }
            for (k, v) in &self.rouge {
                let _ = writeln!(s, "  {:<8}{:>8}", format!("ROUGE-{k}"), pct(*v));
            }
        }
        if !self.per_category.is_empty() {
            let _ = writeln!(s, "error rate by category:");
            let width = self.per_category.keys().map(String::len).max().unwrap_or(0).max(8);
            let _ = writeln!(s, "  {:<width$}{:>6}{:>7}{:>9}", "category", "n", "wrong", "error%");
            for (k, c) in &self.per_category {
                let _ = writeln!(s, "  {:<width$}{:>6}{:>7}{:>9}", k, c.total, c.wrong, pct(c.rate()));
            }
        }
        let _ = writeln!(s, "parse failures: {}", self.parse_failures);
        s
    }

    /// One `key=value` line per figure, full precision.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "strategy={}", self.strategy);
        let _ = writeln!(s, "closed_count={}", self.closed_count);
        let _ = writeln!(s, "open_count={}", self.open_count);
        if let Some(acc) = self.closed_accuracy {
            let _ = writeln!(s, "closed_accuracy={acc}");
        }
        for (k, v) in &self.bleu {
            let _ = writeln!(s, "bleu_{k}={v}");
        }
        for (k, v) in &self.rouge {
            let _ = writeln!(s, "rouge_{}={v}", k.to_lowercase());
        }
        for (k, c) in &self.per_category {
            let _ = writeln!(s, "category.{k}.total={}", c.total);
            let _ = writeln!(s, "category.{k}.wrong={}", c.wrong);
            let _ = writeln!(s, "category.{k}.error={}", c.rate());
        }
        let _ = writeln!(s, "parse_failures={}", self.parse_failures);
        let _ = writeln!(s, "empty_candidates={}", self.empty_candidates);
        for (k, n) in &self.item_count {
            let _ = writeln!(s, "items.{k}={n}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accuracy_cases() {
        let acc = closed_accuracy(&strings(&["yes", "no", "yes"]), &strings(&["yes", "no", "no"])).unwrap();
        assert_eq!(acc, 2.0 / 3.0);
        assert_eq!(closed_accuracy(&strings(&["Yes."]), &strings(&["yes"])).unwrap(), 1.0);
        assert!(matches!(closed_accuracy(&[], &[]), Err(Error::Contract(_))));
        assert!(matches!(closed_accuracy(&strings(&["a"]), &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn bleu_hand_cases() {
        for n in 1..=4 {
            assert_eq!(bleu_n("the cat sat on the mat", "the cat sat on the mat", n).unwrap().score, 1.0);
            assert_eq!(bleu_n("yes", "yes", n).unwrap().score, 1.0);
        }
        let b = bleu_n("the the the the", "the cat", 1).unwrap();
        assert!((b.precisions[0] - 0.25).abs() <= 1e-12);
        let b = bleu_n("a b", "a b c d", 1).unwrap();
        assert!((b.brevity_penalty - (-1.0f64).exp()).abs() <= 1e-12);
        assert!((b.score - (-1.0f64).exp()).abs() <= 1e-12);
        let e = bleu_n("", "a b", 2).unwrap();
        assert!(e.empty_candidate);
        assert_eq!(e.score, 0.0);
        assert!(matches!(bleu_n("a", "a", 5), Err(Error::Contract(_))));
        let z = bleu_n("x y", "a b", 2).unwrap();
        assert_eq!(z.precisions, vec![BLEU_EPSILON, BLEU_EPSILON]);
    }

    #[test]
    fn rouge_hand_cases() {
        assert_eq!(rouge_n("a b c", "a b c", 1).unwrap(), 1.0);
        assert_eq!(rouge_n("a b", "c d", 2).unwrap(), 0.0);
        assert!((rouge_n("a b c", "a b d", 1).unwrap() - 2.0 / 3.0).abs() <= 1e-12);
        assert_eq!(rouge_n("", "", 1).unwrap(), 0.0);
        assert!((rouge_l("a b c d", "a c d f") - 0.75).abs() <= 1e-12);
        assert_eq!(rouge_l("", "a b"), 0.0);
        assert_eq!(rouge_l("A, b!", "a b"), 1.0);
    }

    #[test]
    fn metric_tokens_strip_punctuation() {
        assert_eq!(metric_tokens("Answer: Yes, it's fine."), strings(&["answer", "yes", "its", "fine"]));
        assert!(metric_tokens(" ... ").is_empty());
    }
}
