//! Semi-automated rationale annotation.
//!
//! Samples are first screened for contradictory answers on the same image.
//! A generator then proposes a rationale for each sample, experts review it
//! against three criteria, and rejected candidates are regenerated up to
//! three times before an expert writes one by hand. Approved rationales are
//! exported back into the dataset manifest.

pub mod cleaning;
pub mod error;
pub mod export;
pub mod generator;
pub mod record;
pub mod service;
pub mod store;

pub use cleaning::{detect_inconsistencies, group_by_image, CleaningConfig, CleaningReport, ConflictKind, ConflictReport};
pub use error::{Error, Result};
pub use export::{export_annotated, ExportMode, ExportOutcome};
pub use generator::{
    request_rationale, Generator, GeneratorRequest, GeneratorResponse, HttpGenerator, MockGenerator, PromptTemplate, TOKEN_ENV,
};
pub use record::{review_transition, submit_expert_rationale, AnnotationRecord, Check, Mutation, ReviewVerdict, State, MAX_ATTEMPTS};
pub use service::{router, serve, AppState, ServiceConfig};
pub use store::{Event, Store};
