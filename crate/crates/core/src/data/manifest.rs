//! Line-delimited dataset manifests.
//!
//! The first line is a header record carrying `schema_version`, the dataset
//! name and the closed-answer set; each following line is one sample.
//! Saving a loaded canonical manifest reproduces it byte for byte.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::ImageRef;
use super::vocab::normalize_answer;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QType {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaSample {
    pub id: String,
    pub image: ImageRef,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub qtype: QType,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub dataset: String,
    /// Normalized answers allowed for closed-end questions; empty means unrestricted.
    pub closed_answers: Vec<String>,
}

impl ManifestHeader {
    pub fn new(dataset: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset: dataset.into(),
            closed_answers: vec!["yes".into(), "no".into()],
        }
    }
}

impl Default for ManifestHeader {
    fn default() -> Self {
        Self::new("unnamed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub samples: Vec<VqaSample>,
}

impl Manifest {
    pub fn new(header: ManifestHeader, samples: Vec<VqaSample>) -> Result<Self> {
        let m = Self { header, samples };
        m.validate()?;
        Ok(m)
    }

    /// Schema checks that serde alone cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.header.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    self.header.schema_version
                ),
            });
        }
        let closed: HashSet<String> = self.header.closed_answers.iter().map(|a| normalize_answer(a)).collect();
        let mut seen = HashSet::new();
        for (i, s) in self.samples.iter().enumerate() {
            let line = i + 2;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate id {} at line {line}", s.id)));
            }
            for (field, value) in [("id", &s.id), ("question", &s.question), ("answer", &s.answer)] {
                if value.trim().is_empty() {
                    return Err(Error::Parse {
                        line,
                        message: format!("field `{field}` is empty"),
                    });
                }
            }
            if s.qtype == QType::Closed && !closed.is_empty() && !closed.contains(&normalize_answer(&s.answer)) {
                return Err(Error::Parse {
                    line,
                    message: format!("closed-end answer {:?} not in the declared answer set", s.answer),
                });
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((hi, header_line)) = lines.next() else {
            return Ok(Self::default());
        };
        let header: ManifestHeader = serde_json::from_str(header_line).map_err(|e| Error::Parse {
            line: hi + 1,
            message: format!("header: {e}"),
        })?;
        let mut samples = Vec::new();
        for (i, line) in lines {
            let s: VqaSample = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            samples.push(s);
        }
        Self::new(header, samples)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VqaSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Loads the samples of a manifest file, preserving order.
pub fn load_manifest(path: &Path) -> Result<Vec<VqaSample>> {
    Manifest::load(path).map(|m| m.samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = concat!(
        r#"{"schema_version":1,"dataset":"tiny","closed_answers":["yes","no"]}"#,
        "\n",
        r#"{"id":"a","image":"img/1.png","question":"Is it normal?","answer":"yes","rationale":"clear fields","qtype":"closed","split":"train","category":"Lung"}"#,
        "\n",
        r#"{"id":"b","image":{"grid":[[0,1],[2,3]]},"question":"What organ?","answer":"liver","qtype":"open","split":"test"}"#,
        "\n",
    );

    #[test]
    fn round_trip_is_byte_identical() {
        let m = Manifest::parse(FIXTURE).unwrap();
        assert_eq!(m.samples.len(), 2);
        assert_eq!(m.to_jsonl(), FIXTURE);
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        assert!(Manifest::parse("").unwrap().samples.is_empty());
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let bad = FIXTURE.replace(r#""question":"What organ?","#, "");
        let err = Manifest::parse(&bad).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("question"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_integrity_errors() {
        let dup = FIXTURE.replace(r#""id":"b""#, r#""id":"a""#);
        assert!(matches!(Manifest::parse(&dup), Err(Error::Integrity(_))));
    }

    #[test]
    fn closed_answers_must_be_declared() {
        let bad = FIXTURE.replace(r#""answer":"yes""#, r#""answer":"maybe""#);
        assert!(matches!(Manifest::parse(&bad), Err(Error::Parse { line: 2, .. })));
        let ok = FIXTURE.replace(r#""answer":"yes""#, r#""answer":"Yes.""#);
        assert!(Manifest::parse(&ok).is_ok());
    }

    #[test]
    fn bad_enum_value_is_parse_error() {
        let bad = FIXTURE.replace(r#""split":"test""#, r#""split":"dev""#);
        assert!(matches!(Manifest::parse(&bad), Err(Error::Parse { line: 3, .. })));
    }
}
