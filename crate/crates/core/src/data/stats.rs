use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::manifest::{Manifest, QType, Split};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub dataset: String,
    pub qtype: QType,
    pub images: usize,
    pub train: usize,
    pub test: usize,
}

/// Per-(dataset, question type) image and question counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub rows: Vec<StatsRow>,
}

/// Counts distinct images and per-split questions for each question type present.
pub fn dataset_stats(manifest: &Manifest) -> StatsReport {
    let mut groups: BTreeMap<QType, (HashSet<String>, usize, usize)> = BTreeMap::new();
    for s in &manifest.samples {
        let entry = groups.entry(s.qtype).or_default();
        entry.0.insert(s.image.key());
        match s.split {
            Split::Train => entry.1 += 1,
            Split::Test => entry.2 += 1,
        }
    }
    StatsReport {
        rows: groups
            .into_iter()
            .map(|(qtype, (images, train, test))| StatsRow {
                dataset: manifest.header.dataset.clone(),
                qtype,
                images: images.len(),
                train,
                test,
            })
            .collect(),
    }
}

impl StatsReport {
    pub fn merge(mut self, other: StatsReport) -> Self {
        self.rows.extend(other.rows);
        self
    }

    pub fn total_questions(&self) -> usize {
        self.rows.iter().map(|r| r.train + r.test).sum()
    }

    pub fn row(&self, dataset: &str, qtype: QType) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.qtype == qtype)
    }
}

fn label(row: &StatsRow) -> String {
    let kind = match row.qtype {
        QType::Closed => "closed-end",
        QType::Open => "open-end",
    };
    format!("{} ({kind})", row.dataset)
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>7} {:>13} {:>9}", "Dataset", "Images", "Training set", "Test set")?;
        for row in &self.rows {
            writeln!(f, "{:<22} {:>7} {:>13} {:>9}", label(row), row.images, row.train, row.test)?;
        }
        if self.rows.iter().any(|r| r.dataset == "R-Path") {
            writeln!(f, "note: R-Path is also labelled R-PathVQA")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::ImageRef;
    use crate::data::manifest::{ManifestHeader, VqaSample};

    fn sample(id: &str, img: &str, qtype: QType, split: Split) -> VqaSample {
        VqaSample {
            id: id.into(),
            image: ImageRef::File(img.into()),
            question: "q".into(),
            answer: "yes".into(),
            rationale: None,
            qtype,
            split,
            category: None,
        }
    }

    #[test]
    fn empty_manifest_gives_empty_report() {
        let r = dataset_stats(&Manifest::default());
        assert!(r.rows.is_empty());
        assert_eq!(r.total_questions(), 0);
    }

    #[test]
    fn counts_distinct_images_per_qtype() {
        let m = Manifest::new(
            ManifestHeader::new("toy"),
            vec![
                sample("1", "a", QType::Closed, Split::Train),
                sample("2", "a", QType::Closed, Split::Test),
                sample("3", "b", QType::Closed, Split::Train),
                sample("4", "a", QType::Open, Split::Train),
            ],
        )
        .unwrap();
        let r = dataset_stats(&m);
        let closed = r.row("toy", QType::Closed).unwrap();
        assert_eq!((closed.images, closed.train, closed.test), (2, 2, 1));
        let open = r.row("toy", QType::Open).unwrap();
        assert_eq!((open.images, open.train, open.test), (1, 1, 0));
        assert_eq!(r.total_questions(), m.samples.len());
        assert!(r.to_string().contains("toy (closed-end)"));
    }
}
