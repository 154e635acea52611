//! Consistency review of question-answer pairs that share an image.
//!
//! Nothing here edits an answer. The output is a worklist of conflicts for
//! experts to resolve.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use medthink::data::{normalize_answer, VqaSample};

use crate::error::{Error, Result};
use crate::generator::Generator;

/// A pair of question patterns whose answers must not disagree in a given
/// way, e.g. "is this image normal?" yes next to "is the left lung normal?" no.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntonymRule {
    pub name: String,
    /// Matched against the normalized question.
    pub general: String,
    pub specific: String,
    pub general_answer: String,
    pub specific_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub rules: Vec<AntonymRule>,
    /// `{items}` is replaced by one `id: question -> answer` line per sample.
    pub consistency_prompt: String,
}

const WHOLE: &str = r"^(?:is|are|is/are) (?:this|the) (?:image|scan|study|film|radiograph|x-ray|ct|mri)";

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            rules: vec![
                AntonymRule {
                    name: "normal-whole-vs-part".into(),
                    general: format!(r"{WHOLE} normal\??$"),
                    specific: r"^(?:is|are|is/are) (?:the )?.+ normal\??$".into(),
                    general_answer: "yes".into(),
                    specific_answer: "no".into(),
                },
                AntonymRule {
                    name: "abnormal-whole-vs-part".into(),
                    general: format!(r"{WHOLE} abnormal\??$"),
                    specific: r"^(?:is|are|is/are) (?:the )?.+ abnormal\??$".into(),
                    general_answer: "no".into(),
                    specific_answer: "yes".into(),
                },
            ],
            consistency_prompt: "The following question-answer pairs all describe the same medical image. \
                List every pair of items whose answers contradict each other. Reply with a JSON array of \
                [id, id] pairs, or [] if there are none.\n{items}"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConflictKind {
    /// The same question answered differently.
    DuplicateQuestion,
    Antonym { rule: String },
    /// Flagged by the generator's consistency review.
    Generator { generator_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictItem {
    pub sample_id: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub image: String,
    pub kind: ConflictKind,
    pub items: Vec<ConflictItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub groups: usize,
    pub conflicts: Vec<ConflictReport>,
    /// Set when a generator was configured but could not be used; the
    /// conflicts then come from the local rules alone.
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_reason: Option<String>,
}

/// Groups samples by image identity, keeping manifest order inside a group.
pub fn group_by_image(samples: &[VqaSample]) -> BTreeMap<String, Vec<VqaSample>> {
    let mut out: BTreeMap<String, Vec<VqaSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.image.key()).or_default().push(s.clone());
    }
    out
}

/// Lowercase, whitespace collapsed, trailing punctuation dropped.
fn normalize_question(q: &str) -> String {
    normalize_answer(q)
}

fn item(s: &VqaSample) -> ConflictItem {
    ConflictItem {
        sample_id: s.id.clone(),
        question: s.question.clone(),
        answer: s.answer.clone(),
    }
}

struct CompiledRule {
    name: String,
    general: Regex,
    specific: Regex,
    general_answer: String,
    specific_answer: String,
}

fn compile(rules: &[AntonymRule]) -> Result<Vec<CompiledRule>> {
    rules
        .iter()
        .map(|r| {
            let re = |p: &str| Regex::new(p).map_err(|e| Error::Config(format!("rule {}: {e}", r.name)));
            Ok(CompiledRule {
                name: r.name.clone(),
                general: re(&r.general)?,
                specific: re(&r.specific)?,
                general_answer: normalize_answer(&r.general_answer),
                specific_answer: normalize_answer(&r.specific_answer),
            })
        })
        .collect()
}

fn heuristic_conflicts(image: &str, group: &[VqaSample], rules: &[CompiledRule]) -> Vec<ConflictReport> {
    let mut out = Vec::new();

    let mut by_question: BTreeMap<String, Vec<&VqaSample>> = BTreeMap::new();
    for s in group {
        by_question.entry(normalize_question(&s.question)).or_default().push(s);
    }
    for same in by_question.values() {
        let first = normalize_answer(&same[0].answer);
        if same.iter().any(|s| normalize_answer(&s.answer) != first) {
            out.push(ConflictReport {
                image: image.to_string(),
                kind: ConflictKind::DuplicateQuestion,
                items: same.iter().map(|s| item(s)).collect(),
            });
        }
    }

    for rule in rules {
        for g in group {
            let gq = normalize_question(&g.question);
            if !rule.general.is_match(&gq) || normalize_answer(&g.answer) != rule.general_answer {
                continue;
            }
            for s in group {
                let sq = normalize_question(&s.question);
                if rule.general.is_match(&sq) || !rule.specific.is_match(&sq) {
                    continue;
                }
                if normalize_answer(&s.answer) == rule.specific_answer {
                    out.push(ConflictReport {
                        image: image.to_string(),
                        kind: ConflictKind::Antonym { rule: rule.name.clone() },
                        items: vec![item(g), item(s)],
                    });
                }
            }
        }
    }
    out
}

/// Parses a reply of the form `[["id1","id2"], ...]`, tolerating prose
/// around the array.
pub fn parse_flagged_pairs(reply: &str) -> Result<Vec<(String, String)>> {
    let bad = || Error::Generator(format!("consistency reply is not a JSON pair list: {reply:?}"));
    let start = reply.find('[').ok_or_else(bad)?;
    let end = reply.rfind(']').ok_or_else(bad)?;
    if end < start {
        return Err(bad());
    }
    let pairs: Vec<Vec<String>> = serde_json::from_str(&reply[start..=end]).map_err(|_| bad())?;
    pairs
        .into_iter()
        .map(|p| match <[String; 2]>::try_from(p) {
            Ok([a, b]) => Ok((a, b)),
            Err(_) => Err(bad()),
        })
        .collect()
}

fn generator_conflicts(
    image: &str,
    group: &[VqaSample],
    config: &CleaningConfig,
    client: &dyn Generator,
) -> Result<Vec<ConflictReport>> {
    let items: Vec<String> = group.iter().map(|s| format!("{}: {} -> {}", s.id, s.question, s.answer)).collect();
    let prompt = config.consistency_prompt.replace("{items}", &items.join("\n"));
    let reply = client.review(&prompt)?;
    let generator_id = client.id();
    let find = |id: &str| group.iter().find(|s| s.id == id);
    let mut out = Vec::new();
    for (a, b) in parse_flagged_pairs(&reply)? {
        if let (Some(x), Some(y)) = (find(&a), find(&b)) {
            if x.id != y.id {
                out.push(ConflictReport {
                    image: image.to_string(),
                    kind: ConflictKind::Generator { generator_id: generator_id.clone() },
                    items: vec![item(x), item(y)],
                });
            }
        }
    }
    Ok(out)
}

/// Flags answer conflicts within each image group using the local rules
/// and, when `client` is given, the generator's own review. A generator
/// failure falls back to the local rules and marks the report degraded.
pub fn detect_inconsistencies(
    groups: &BTreeMap<String, Vec<VqaSample>>,
    config: &CleaningConfig,
    client: Option<&dyn Generator>,
) -> Result<CleaningReport> {
    let rules = compile(&config.rules)?;
    let mut report = CleaningReport { groups: groups.len(), ..Default::default() };
    for (image, group) in groups {
        if group.iter().any(|s| s.image.key() != *image) {
            return Err(Error::contract(format!("group {image} mixes images")));
        }
        report.conflicts.extend(heuristic_conflicts(image, group, &rules));
        if group.len() < 2 {
            continue;
        }
        if let Some(c) = client.filter(|_| !report.degraded) {
            match generator_conflicts(image, group, config, c) {
                Ok(found) => report.conflicts.extend(found),
                Err(e) => {
                    report.degraded = true;
                    report.degraded_reason = Some(e.to_string());
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use medthink::data::{ImageRef, QType, Split};

    fn s(id: &str, img: &str, q: &str, a: &str) -> VqaSample {
        VqaSample {
            id: id.into(),
            image: ImageRef::File(img.into()),
            question: q.into(),
            answer: a.into(),
            rationale: None,
            qtype: QType::Closed,
            split: Split::Train,
            category: None,
        }
    }

    fn run(samples: &[VqaSample]) -> CleaningReport {
        detect_inconsistencies(&group_by_image(samples), &CleaningConfig::default(), None).unwrap()
    }

    #[test]
    fn whole_normal_vs_part_abnormal() {
        let r = run(&[
            s("1", "x", "Is this image normal?", "Yes"),
            s("2", "x", "Is/Are the right hemidiaphragm normal?", "No"),
        ]);
        assert_eq!(r.conflicts.len(), 1);
        assert_eq!(r.conflicts[0].kind, ConflictKind::Antonym { rule: "normal-whole-vs-part".into() });
        assert!(!r.degraded);
    }

    #[test]
    fn consistent_groups_are_clean() {
        assert!(run(&[s("1", "x", "Is this image normal?", "yes")]).conflicts.is_empty());
        let r = run(&[
            s("1", "x", "Is the liver enlarged?", "yes"),
            s("2", "x", "is the liver  enlarged", "Yes."),
            s("3", "y", "Is the liver enlarged?", "no"),
        ]);
        assert!(r.conflicts.is_empty());
        assert_eq!(r.groups, 2);
    }

    #[test]
    fn duplicate_question_with_different_answers() {
        let r = run(&[s("1", "x", "Is there a mass?", "yes"), s("2", "x", "is there a mass", "no")]);
        assert_eq!(r.conflicts.len(), 1);
        assert_eq!(r.conflicts[0].kind, ConflictKind::DuplicateQuestion);
        assert_eq!(r.conflicts[0].items.len(), 2);
    }

    #[test]
    fn pair_parsing() {
        let p = parse_flagged_pairs("Sure: [[\"a\",\"b\"]] done").unwrap();
        assert_eq!(p, vec![("a".to_string(), "b".to_string())]);
        assert!(parse_flagged_pairs("[]").unwrap().is_empty());
        assert!(parse_flagged_pairs("none").is_err());
        assert!(parse_flagged_pairs("[[\"a\"]]").is_err());
    }
}
