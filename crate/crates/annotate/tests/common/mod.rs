#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use medthink::data::{Image, ImageRef, Manifest, ManifestHeader, QType, Split, VqaSample};
use medthink_annotate::{AnnotationRecord, Mutation};

pub fn sample(i: usize) -> VqaSample {
    let mut px = vec![0u8; 16];
    px[i % 16] = 255;
    VqaSample {
        id: format!("s{i}"),
        image: ImageRef::Inline(Image::new(4, 4, px).unwrap()),
        question: format!("Is there a lesion in region {i}?"),
        answer: if i.is_multiple_of(2) { "yes".into() } else { "no".into() },
        rationale: None,
        qtype: QType::Closed,
        split: Split::Train,
        category: None,
    }
}

pub fn manifest(n: usize) -> Manifest {
    Manifest::new(ManifestHeader::new("toy"), (0..n).map(sample).collect()).unwrap()
}

pub fn record(i: usize) -> AnnotationRecord {
    AnnotationRecord::new(&sample(i))
}

pub fn generated(text: &str) -> Mutation {
    Mutation::Generated {
        rationale: text.into(),
        generator_id: "test".into(),
        prompt_template_id: "mdmr-v1".into(),
        latency_ms: 0,
        timestamp: 0,
    }
}

/// Runs `app` on an ephemeral port in a background runtime.
pub fn spawn(router: axum::Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

pub fn arc<T>(t: T) -> Arc<T> {
    Arc::new(t)
}
