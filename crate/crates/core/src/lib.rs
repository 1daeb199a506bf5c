//! Core engine for turning a parsed radiance-field paper into a validated,
//! trainable plugin repository.
//!
//! The pipeline runs in four stages, each backed by a module here:
//!
//! - [`paper`]: markdown ingestion, cleaning, completeness checks and the
//!   knowledge base of paper/implementation exemplars.
//! - [`citation`]: the citation dependency graph and recursive recovery of
//!   components borrowed from cited papers.
//! - [`grammar`] + [`repo`]: the plugin grammar with per-role interface
//!   contracts, and the repository import DAG it validates.
//! - [`synth`]: DAG construction, interface freeze, per-node implementation
//!   and smoke testing with localized repair.
//! - [`critic`]: error fields, ROI extraction, cross-view consensus, VLM
//!   diagnosis and revertible patching in a bounded refinement loop.
//! - [`bench`]: the executability ladder and novelty-coverage metrics.
//! - [`config`]: run-wide defaults such as smoke iterations and the ladder
//!   tolerance.
//!
//! Every agent talks to language models through [`llm::Gateway`], which
//! supports live, replay (content-addressed cache) and scripted mock
//! backends so whole runs can be replayed byte-for-byte.

pub mod bench;
pub mod citation;
pub mod config;
pub mod critic;
pub mod grammar;
pub mod llm;
pub mod paper;
pub mod repo;
pub mod sandbox;
pub mod shape;
pub mod synth;

pub use bench::{LadderResult, NoveltyItem};
pub use citation::{CitationGraph, CitationRequirement, ComponentKind, ComponentSpec};
pub use critic::{Diagnosis, ErrorField, Patch, Roi, ViewSample};
pub use grammar::{DerivationPlan, InterfaceContract, PluginGrammar, ValidationReport};
pub use llm::{Gateway, LlmRequest, LlmResponse};
pub use paper::{BibEntry, KnowledgeBase, PaperDocument};
pub use repo::{FileInterface, FileRecord, Repository, RepositoryGraph};
pub use config::RunConfig;
pub use sandbox::{Sandbox, SmokeReport, SmokeRequest, StubSandbox};
pub use synth::{synthesize, SynthConfig, SynthOutput};
pub use shape::ShapeSignature;
