//! Render critique: windowed error fields, regions of interest, cross-view
//! consistency, model diagnosis and revertible patches, run as a bounded
//! refinement loop.

mod consensus;
mod diagnose;
mod field;
mod image;
mod patch;
mod refine;
mod roi;
pub mod synthetic;
mod views;

use thiserror::Error;

use crate::llm::LlmError;
use crate::sandbox::SandboxError;

pub use consensus::{cross_view_consensus, scene_extent, Camera, Consensus, ConsensusConfig, ViewSample};
pub use diagnose::{vlm_diagnose, ArtifactClass, Diagnosis, DIAGNOSE_TAG};
pub use field::{compute_error_fields, image_psnr, psnr_from_mse, ErrorField, WindowConfig};
pub use image::{Grid, Image};
pub use patch::{patch_source, Patch, PatchEdit, PatchJournal, RevertToken};
pub use refine::{refine, AppliedPatch, Decision, RefineConfig, RefineIteration, RefineOutcome, DEFAULT_MAX_REFINE};
pub use roi::{components, extract_rois, open_close, percentile_cut, MorphConfig, Roi};
pub use views::{read_depth, read_views, write_depth, write_views, SyntheticViews, ViewDir, ViewSource, DEPTH_FILE};

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("render is {render:?} but reference is {gt:?}")]
    DimensionMismatch { render: (usize, usize), gt: (usize, usize) },
    #[error("{width}x{height} image is smaller than the {size}px window")]
    WindowTooLarge { size: usize, width: usize, height: usize },
    #[error("consensus needs at least 2 views, got {0}")]
    InsufficientViews(usize),
    #[error("invalid view: {0}")]
    InvalidView(String),
    #[error("patch does not apply to {file}: {detail}")]
    SpanMismatch { file: String, detail: String },
    #[error("unknown revert token {0}")]
    UnknownRevertToken(u64),
    #[error("revert token {0} is buried under a later patch of the same file")]
    OutOfOrderRevert(u64),
    #[error("patch target {0} does not exist")]
    MissingTarget(String),
    #[error("malformed patch: {0}")]
    MalformedPatch(String),
    #[error("malformed diagnosis: {0}")]
    MalformedDiagnosis(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}
