//! Run-wide settings with their defaults, loadable from JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::DEFAULT_TOLERANCE_DB;
use crate::citation::ResolveOptions;
use crate::critic::{ConsensusConfig, MorphConfig, RefineConfig, WindowConfig, DEFAULT_MAX_REFINE};
use crate::sandbox::{SmokeRequest, DEFAULT_SMOKE_ITERS};
use crate::synth::{Budgets, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub smoke_iters: u64,
    pub max_refine: usize,
    pub ladder_tolerance_db: f64,
    pub regression_db: f64,
    pub psnr_target: Option<f64>,
    pub freeze_attempts: u32,
    pub implement_attempts: u32,
    pub repair_rounds: u32,
    pub citation_depth: usize,
    pub exemplars: usize,
    pub snippet_lines: usize,
    pub clean: bool,
    pub window: WindowConfig,
    pub morph: MorphConfig,
    pub consensus: ConsensusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let budgets = Budgets::default();
        RunConfig {
            smoke_iters: DEFAULT_SMOKE_ITERS,
            max_refine: DEFAULT_MAX_REFINE,
            ladder_tolerance_db: DEFAULT_TOLERANCE_DB,
            regression_db: 0.1,
            psnr_target: None,
            freeze_attempts: budgets.freeze,
            implement_attempts: budgets.implement,
            repair_rounds: budgets.repair,
            citation_depth: ResolveOptions::default().max_depth,
            exemplars: 2,
            snippet_lines: 40,
            clean: true,
            window: WindowConfig::default(),
            morph: MorphConfig::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

impl RunConfig {
    /// Fields absent from the file keep their defaults.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn smoke(&self, data: Option<PathBuf>) -> SmokeRequest {
        SmokeRequest {
            iters: self.smoke_iters,
            eval: true,
            data,
        }
    }

    pub fn synth(&self, data: Option<PathBuf>) -> SynthConfig {
        SynthConfig {
            package: None,
            smoke: self.smoke(data),
            budgets: Budgets {
                freeze: self.freeze_attempts,
                implement: self.implement_attempts,
                repair: self.repair_rounds,
            },
            exemplars: self.exemplars,
            snippet_lines: self.snippet_lines,
            clean: self.clean,
            resolve: ResolveOptions {
                max_depth: self.citation_depth,
            },
        }
    }

    pub fn refine(&self, work_dir: impl Into<PathBuf>, data: Option<PathBuf>) -> RefineConfig {
        RefineConfig {
            max_refine: self.max_refine,
            regression_db: self.regression_db,
            window: self.window,
            morph: self.morph,
            consensus: self.consensus,
            smoke: self.smoke(data),
            work_dir: work_dir.into(),
        }
    }
}
