//! Count-faithful stand-ins for the published benchmark manifests.
//!
//! Only the shape of each dataset is reproduced: per question type, the
//! number of distinct images and of train/test questions. Questions and
//! answers are placeholders and image references point at files that are
//! not shipped.

use super::image::ImageRef;
use super::manifest::{Manifest, ManifestHeader, QType, Split, VqaSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRow {
    pub qtype: QType,
    pub images: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkShape {
    pub name: &'static str,
    pub slug: &'static str,
    /// Distinct images across both question types.
    pub total_images: usize,
    pub closed: TableRow,
    pub open: TableRow,
}

pub const BENCHMARKS: [BenchmarkShape; 3] = [
    BenchmarkShape {
        name: "R-RAD",
        slug: "r-rad",
        total_images: 314,
        closed: TableRow { qtype: QType::Closed, images: 300, train: 1823, test: 272 },
        open: TableRow { qtype: QType::Open, images: 267, train: 1241, test: 179 },
    },
    BenchmarkShape {
        name: "R-SLAKE",
        slug: "r-slake",
        total_images: 546,
        closed: TableRow { qtype: QType::Closed, images: 545, train: 1943, test: 416 },
        open: TableRow { qtype: QType::Open, images: 545, train: 2976, test: 645 },
    },
    BenchmarkShape {
        name: "R-Path",
        slug: "r-path",
        total_images: 4012,
        closed: TableRow { qtype: QType::Closed, images: 3361, train: 9806, test: 3391 },
        open: TableRow { qtype: QType::Open, images: 3425, train: 9933, test: 3364 },
    },
];

/// Builds a manifest whose statistics equal `shape`. Closed-end questions
/// use the first image ids, open-end questions the last, so the union covers
/// `total_images`.
pub fn benchmark_manifest(shape: &BenchmarkShape) -> Manifest {
    let mut samples = Vec::new();
    let mut counter = 0usize;
    for row in [shape.closed, shape.open] {
        let first_image = match row.qtype {
            QType::Closed => 0,
            QType::Open => shape.total_images - row.images,
        };
        let total = row.train + row.test;
        for k in 0..total {
            counter += 1;
            let image = first_image + k % row.images;
            let (answer, qtype_tag) = match row.qtype {
                QType::Closed => (if k % 2 == 0 { "yes" } else { "no" }, "c"),
                QType::Open => ("placeholder", "o"),
            };
            samples.push(VqaSample {
                id: format!("{}-{qtype_tag}{counter:06}", shape.slug),
                image: ImageRef::File(format!("{}/{image:05}.jpg", shape.slug)),
                question: "q".into(),
                answer: answer.into(),
                rationale: None,
                qtype: row.qtype,
                split: if k < row.train { Split::Train } else { Split::Test },
                category: None,
            });
        }
    }
    Manifest::new(ManifestHeader::new(shape.name), samples).expect("fixture manifests are valid")
}
