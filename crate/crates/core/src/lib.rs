//! Spatial-temporal scene graph toolkit and five-step video reasoning
//! pipeline.
//!
//! * [`stsg`]: data model, validation, coreference linking, frame subsampling
//! * [`text`]: the textual `Frame <k>: {Objects: [...], Triplets: [...]}` format
//! * [`query`]: target resolution, tracklets, neighbour scenes
//! * [`metrics`]: grounding metrics (box IoU, matching, triplets, temporal IoU)
//! * [`datagen`]: instruction-tuning data for the five grounding objectives
//! * [`backend`]: chat-completion backends (scripted mock, HTTP)
//! * [`orchestrator`]: the reasoning chain itself
//! * [`harness`]: dataset loading and batch accuracy runs

pub mod backend;
pub mod datagen;
pub mod harness;
pub mod metrics;
pub mod orchestrator;
pub mod prompts;
pub mod query;
pub mod stsg;
pub mod text;

pub use stsg::{
    link_coreferences, subsample, validate, BBox, CoreferenceLink, FrameSceneGraph, ObjectNode,
    PredicateEdge, Stsg, StsgError, ValidationReport, Violation, ViolationCode,
};
pub use text::{parse, serialize, TextError};
pub use query::{extract_tracklet, neighbor_scene, partial_stsg, resolve_targets, NeighborScene, QueryError, Tracklet};
pub use metrics::{grounding_report, iou, match_objects, temporal_iou, triplet_scores, GroundingReport, Prf};
pub use backend::{
    BackendError, ChatBackend, ChatMessage, ChatRequest, ChatResponse, ChatSession, HttpBackend, HttpConfig,
    MockBackend, MockEntry, MockScript, StepTag,
};
pub use orchestrator::{run_vot, GroundingMode, QaInstance, QaOption, ReasoningTrace, RunError, VotConfig, VotError};
pub use datagen::{gen_examples, DatagenError, Objective, TuningExample, VideoStsgPair};
pub use harness::{load_dataset, run_benchmark, BenchOptions, BenchReport, Dataset, HarnessError};
