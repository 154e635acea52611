//! The bundled benchmark-shaped manifests: on-disk bytes and every count.

use std::path::PathBuf;

use medthink::data::fixtures::{benchmark_manifest, BENCHMARKS};
use medthink::data::{dataset_stats, Manifest, QType, StatsReport};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/benchmarks")
}

#[test]
fn bundled_files_are_canonical() {
    for shape in &BENCHMARKS {
        let path = fixture_dir().join(format!("{}.jsonl", shape.slug));
        let expected = benchmark_manifest(shape).to_jsonl();
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&path, &expected).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap();
        assert!(on_disk == expected, "{} differs from its generator", path.display());
        assert_eq!(Manifest::load(&path).unwrap().to_jsonl(), on_disk);
    }
}

#[test]
fn bundled_files_reproduce_benchmark_counts() {
    let mut report = StatsReport::default();
    for slug in ["r-rad", "r-slake", "r-path"] {
        let m = Manifest::load(&fixture_dir().join(format!("{slug}.jsonl"))).unwrap();
        report = report.merge(dataset_stats(&m));
    }
    let cells = [
        ("R-RAD", QType::Closed, 300, 1823, 272),
        ("R-RAD", QType::Open, 267, 1241, 179),
        ("R-SLAKE", QType::Closed, 545, 1943, 416),
        ("R-SLAKE", QType::Open, 545, 2976, 645),
        ("R-Path", QType::Closed, 3361, 9806, 3391),
        ("R-Path", QType::Open, 3425, 9933, 3364),
    ];
    for (dataset, qtype, images, train, test) in cells {
        let row = report.row(dataset, qtype).unwrap();
        assert_eq!((row.images, row.train, row.test), (images, train, test), "{dataset} {qtype:?}");
    }
    assert_eq!(report.total_questions(), 3515 + 5980 + 26494);
}
