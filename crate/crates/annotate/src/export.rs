use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use medthink::data::Manifest;

use crate::error::{Error, Result};
use crate::record::AnnotationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportMode {
    /// Any non-terminal record aborts the export.
    #[default]
    Strict,
    /// Non-terminal records are skipped and listed.
    Permissive,
}

impl std::str::FromStr for ExportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ExportMode::Strict),
            "permissive" => Ok(ExportMode::Permissive),
            other => Err(Error::contract(format!("unknown export mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportOutcome {
    pub manifest: Manifest,
    pub exported: Vec<String>,
    /// Non-terminal records left out in permissive mode.
    pub skipped: Vec<String>,
}

/// Writes approved and expert-written rationales into the matching samples.
/// Samples without a record pass through unchanged.
pub fn export_annotated<'a>(
    records: impl IntoIterator<Item = &'a AnnotationRecord>,
    manifest: &Manifest,
    mode: ExportMode,
) -> Result<ExportOutcome> {
    let by_id: BTreeMap<&str, &AnnotationRecord> = records.into_iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let unknown: Vec<&str> = by_id
        .keys()
        .copied()
        .filter(|id| !manifest.samples.iter().any(|s| s.id == *id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::contract(format!("records without a manifest sample: {}", unknown.join(","))));
    }

    let mut samples = manifest.samples.clone();
    let (mut exported, mut skipped) = (Vec::new(), Vec::new());
    for sample in &mut samples {
        let Some(rec) = by_id.get(sample.id.as_str()) else { continue };
        if rec.state.is_terminal() {
            sample.rationale = rec.candidate_rationale.clone();
            exported.push(sample.id.clone());
        } else {
            skipped.push(sample.id.clone());
        }
    }
    if mode == ExportMode::Strict && !skipped.is_empty() {
        return Err(Error::Unresolved { ids: skipped });
    }
    Ok(ExportOutcome {
        manifest: Manifest::new(manifest.header.clone(), samples)?,
        exported,
        skipped,
    })
}
