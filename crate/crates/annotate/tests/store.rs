mod common;

use std::sync::{Arc, Barrier, Mutex};

use common::{generated, manifest};
use medthink::data::Manifest;
use medthink_annotate::{export_annotated, Error, ExportMode, Mutation, ReviewVerdict, State, Store};

fn drive(store: &mut Store) {
    store.apply("s0", 0, generated("first")).unwrap();
    store.apply("s0", 1, Mutation::Reviewed { verdict: ReviewVerdict::new(true, true, true) }).unwrap();
    store.apply("s1", 0, Mutation::GenerationFailed { error: "timeout".into(), timestamp: 3 }).unwrap();
    store.apply("s1", 1, generated("second")).unwrap();
    for round in 0..3 {
        let v = store.get("s2").unwrap().version;
        store.apply("s2", v, generated(&format!("try {round}"))).unwrap();
        store
            .apply("s2", v + 1, Mutation::Reviewed { verdict: ReviewVerdict::new(false, true, true) })
            .unwrap();
    }
    let v = store.get("s2").unwrap().version;
    store
        .apply("s2", v, Mutation::ExpertWritten { rationale: "Expert: exact text.".into(), reviewer: "dr".into(), timestamp: 9 })
        .unwrap();
}

#[test]
fn log_replays_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let m = manifest(4);
    let mut store = Store::open(&path, Some(&m)).unwrap();
    drive(&mut store);
    let live: Vec<_> = store.records().cloned().collect();
    drop(store);

    let again = Store::open(&path, Some(&m)).unwrap();
    let replayed: Vec<_> = again.records().cloned().collect();
    assert_eq!(live, replayed);
    assert_eq!(again.seq(), 4 + 2 + 2 + 7);
    for r in &replayed {
        assert_eq!(&r.replay().unwrap(), r);
    }
    assert_eq!(again.get("s1").unwrap().attempts, 1);
    assert_eq!(again.get("s2").unwrap().state, State::ExpertWritten);
}

#[test]
fn reopening_without_changes_appends_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let m = manifest(3);
    drop(Store::open(&path, Some(&m)).unwrap());
    let before = std::fs::read(&path).unwrap();
    drop(Store::open(&path, Some(&m)).unwrap());
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn tampered_log_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut store = Store::open(&path, Some(&manifest(4))).unwrap();
    drive(&mut store);
    drop(store);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    // Dropping a line breaks the sequence.
    let mut cut = lines.clone();
    cut.remove(5);
    match Store::replay(&cut.join("\n")) {
        Err(Error::Log { line, .. }) => assert_eq!(line, 6),
        other => panic!("{other:?}"),
    }
    // A reordered mutation is illegal in the state it lands in.
    let mut swapped = lines.clone();
    swapped.swap(4, 5);
    assert!(matches!(Store::replay(&swapped.join("\n")), Err(Error::Log { .. })));
    assert!(matches!(Store::replay("{not json"), Err(Error::Log { line: 1, .. })));
}

#[test]
fn failed_mutation_changes_nothing() {
    let mut store = Store::from_manifest(&manifest(2)).unwrap();
    let before = store.get("s0").unwrap().clone();
    assert!(matches!(store.apply("s0", 7, generated("x")), Err(Error::Conflict { .. })));
    assert!(matches!(
        store.apply("s0", 0, Mutation::Reviewed { verdict: ReviewVerdict::new(true, true, true) }),
        Err(Error::Contract(_))
    ));
    assert!(matches!(store.apply("nope", 0, generated("x")), Err(Error::NotFound(_))));
    assert_eq!(store.get("s0").unwrap(), &before);
    assert_eq!(store.seq(), 2);
}

#[test]
fn concurrent_writers_on_one_version_exactly_one_wins() {
    for _ in 0..20 {
        let mut store = Store::from_manifest(&manifest(1)).unwrap();
        store.apply("s0", 0, generated("x")).unwrap();
        let store = Arc::new(Mutex::new(store));
        let barrier = Arc::new(Barrier::new(8));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let (store, barrier) = (Arc::clone(&store), Arc::clone(&barrier));
                std::thread::spawn(move || {
                    barrier.wait();
                    let verdict = ReviewVerdict::new(i % 2 == 0, true, true);
                    store.lock().unwrap().apply("s0", 1, Mutation::Reviewed { verdict }).map(|_| ())
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results.iter().filter(|r| r.is_err()).all(|r| matches!(r, Err(Error::Conflict { .. }))));
        assert_eq!(store.lock().unwrap().get("s0").unwrap().version, 2);
    }
}

#[test]
fn export_writes_terminal_rationales_verbatim() {
    let m = manifest(4);
    let mut store = Store::from_manifest(&m).unwrap();
    drive(&mut store);

    let err = export_annotated(store.records(), &m, ExportMode::Strict).unwrap_err();
    match err {
        Error::Unresolved { ids } => assert_eq!(ids, vec!["s1".to_string(), "s3".to_string()]),
        other => panic!("{other}"),
    }

    let out = export_annotated(store.records(), &m, ExportMode::Permissive).unwrap();
    assert_eq!(out.exported, vec!["s0", "s2"]);
    assert_eq!(out.skipped, vec!["s1", "s3"]);
    assert_eq!(out.manifest.samples.len(), 4);
    assert_eq!(out.manifest.samples[0].rationale.as_deref(), Some("first"));
    assert_eq!(out.manifest.samples[2].rationale.as_deref(), Some("Expert: exact text."));
    assert_eq!(out.manifest.samples[1].rationale, None);

    let text = out.manifest.to_jsonl();
    let back = Manifest::parse(&text).unwrap();
    assert_eq!(back, out.manifest);
}

#[test]
fn all_approved_export_keeps_every_sample() {
    let m = manifest(5);
    let mut store = Store::from_manifest(&m).unwrap();
    for i in 0..5 {
        let id = format!("s{i}");
        store.apply(&id, 0, generated(&format!("r{i}"))).unwrap();
        store.apply(&id, 1, Mutation::Reviewed { verdict: ReviewVerdict::new(true, true, true) }).unwrap();
    }
    let out = export_annotated(store.records(), &m, ExportMode::Strict).unwrap();
    assert_eq!(out.manifest.samples.len(), 5);
    assert!(out.skipped.is_empty());
    assert!(out.manifest.samples.iter().enumerate().all(|(i, s)| s.rationale.as_deref() == Some(&*format!("r{i}"))));
}

#[test]
fn export_rejects_records_for_unknown_samples() {
    let m = manifest(2);
    let stray = common::record(9);
    assert!(matches!(export_annotated([&stray], &m, ExportMode::Permissive), Err(Error::Contract(_))));
}
