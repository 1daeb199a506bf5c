use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::consensus::{cross_view_consensus, Consensus, ConsensusConfig, ViewSample};
use super::diagnose::{vlm_diagnose, Diagnosis};
use super::field::{compute_error_fields, image_psnr, ErrorField, WindowConfig};
use super::image::Grid;
use super::patch::{Patch, PatchJournal, RevertToken};
use super::roi::{extract_rois, MorphConfig, Roi};
use super::views::ViewSource;
use super::CriticError;
use crate::llm::Gateway;
use crate::repo::Repository;
use crate::sandbox::{Sandbox, SmokeReport, SmokeRequest};

pub const DEFAULT_MAX_REFINE: usize = 5;

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub max_refine: usize,
    /// A patch that lowers evaluation PSNR by more than this is reverted.
    pub regression_db: f64,
    pub window: WindowConfig,
    pub morph: MorphConfig,
    pub consensus: ConsensusConfig,
    pub smoke: SmokeRequest,
    /// Receives `critique_<i>.json` and the images shown to the critic.
    pub work_dir: PathBuf,
}

impl RefineConfig {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        RefineConfig {
            max_refine: DEFAULT_MAX_REFINE,
            regression_db: 0.1,
            window: WindowConfig::default(),
            morph: MorphConfig::default(),
            consensus: ConsensusConfig::default(),
            smoke: SmokeRequest::default(),
            work_dir: work_dir.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Continue,
    NoDiagnoses,
    TargetReached,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedPatch {
    pub patch: Patch,
    pub token: Option<RevertToken>,
    pub reverted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineIteration {
    pub index: usize,
    pub psnr_before: Option<f64>,
    pub psnr_after: Option<f64>,
    pub rois: Vec<Roi>,
    pub consensus: Option<Consensus>,
    pub diagnoses: Vec<Diagnosis>,
    pub patches: Vec<AppliedPatch>,
    pub decision: Decision,
}

impl RefineIteration {
    fn critique_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rois": self.rois,
            "consensus": self.consensus,
            "diagnoses": self.diagnoses,
            "patches": self.patches,
            "decision": self.decision,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub repo: Repository,
    pub history: Vec<RefineIteration>,
    pub report: SmokeReport,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CriticError {
    CriticError::Io(format!("{}: {e}", path.display()))
}

/// Negated PSNR per pixel, from the window whose anchor is nearest above-left.
fn heatmap(field: &ErrorField, width: usize, height: usize) -> Grid {
    let s = field.config.stride;
    Grid::from_fn(width, height, |x, y| {
        let gx = (x / s).min(field.psnr.width - 1);
        let gy = (y / s).min(field.psnr.height - 1);
        -field.psnr.get(gx, gy)
    })
}

struct Critique {
    rois: Vec<Roi>,
    consensus: Option<Consensus>,
    triplet: [PathBuf; 3],
    summary: String,
}

fn critique(views: &[ViewSample], cfg: &RefineConfig, dir: &Path) -> Result<Critique, CriticError> {
    let mut worst: Option<(f64, &ViewSample, ErrorField)> = None;
    for v in views {
        let Some(gt) = &v.gt else { continue };
        let field = compute_error_fields(&v.render, gt, &cfg.window)?;
        let psnr = image_psnr(&v.render, gt, &cfg.window);
        if worst.as_ref().is_none_or(|(p, _, _)| psnr < *p) {
            worst = Some((psnr, v, field));
        }
    }
    let (psnr, view, field) = worst.ok_or_else(|| CriticError::InvalidView("no view has ground truth".into()))?;
    let (w, h) = (view.render.width, view.render.height);
    let rois = extract_rois(&field, w, h, &cfg.morph);
    let consensus = if views.len() >= 2 && views.iter().all(|v| v.gt.is_some()) {
        Some(cross_view_consensus(views, None, &cfg.consensus)?)
    } else {
        None
    };

    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let triplet = [dir.join("gt.png"), dir.join("render.png"), dir.join("heatmap.png")];
    view.gt.as_ref().expect("worst view has ground truth").save_png(&triplet[0])?;
    view.render.save_png(&triplet[1])?;
    heatmap(&field, w, h).save_png(&triplet[2], -50.0, 0.0)?;

    let mut summary = format!("Worst view {} at {psnr:.2} dB.\n", view.name);
    for r in &rois {
        let _ = writeln!(summary, "ROI {:?}: {:.2} dB over {} px", r.bbox, r.mean_psnr, r.area);
    }
    if let Some(c) = &consensus {
        let _ = writeln!(summary, "View-inconsistent pixels per view: {:?}", c.flagged);
        for p in &c.centroids {
            let _ = writeln!(summary, "Floater cluster near ({:.2}, {:.2}, {:.2})", p[0], p[1], p[2]);
        }
    }
    Ok(Critique {
        rois,
        consensus,
        triplet,
        summary,
    })
}

fn write_critique(dir: &Path, it: &RefineIteration) -> Result<(), CriticError> {
    let path = dir.join(format!("critique_{}.json", it.index));
    let text = serde_json::to_string_pretty(&it.critique_json()).map_err(|e| io(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))
}

/// Critique, patch and re-train until the critic is silent, the PSNR target
/// is met or `max_refine` iterations have run.
pub fn refine(
    repo: &Repository,
    views: &dyn ViewSource,
    psnr_target: f64,
    sandbox: &dyn Sandbox,
    gateway: &Gateway,
    cfg: &RefineConfig,
) -> Result<RefineOutcome, CriticError> {
    let mut repo = repo.clone();
    let mut journal = PatchJournal::new();
    let mut report = sandbox.run(&repo, &cfg.smoke)?;
    let mut history = Vec::new();
    fs::create_dir_all(&cfg.work_dir).map_err(|e| io(&cfg.work_dir, e))?;

    for index in 1..=cfg.max_refine {
        let before = report.psnr_eval;
        let mut it = RefineIteration {
            index,
            psnr_before: before,
            psnr_after: before,
            rois: Vec::new(),
            consensus: None,
            diagnoses: Vec::new(),
            patches: Vec::new(),
            decision: Decision::Continue,
        };
        if before.is_some_and(|p| p >= psnr_target) {
            it.decision = Decision::TargetReached;
            write_critique(&cfg.work_dir, &it)?;
            history.push(it);
            break;
        }

        let samples = views.views(&repo, &report)?;
        let c = critique(&samples, cfg, &cfg.work_dir.join(format!("critique_{index}")))?;
        let mut context = format!(
            "Iteration {index} of {}. Evaluation PSNR {} dB, target {psnr_target:.2} dB.\n{}Repository files:\n",
            cfg.max_refine,
            before.map_or("n/a".into(), |p| format!("{p:.2}")),
            c.summary
        );
        for path in repo.files.keys() {
            let _ = writeln!(context, "- {path}");
        }
        let [gt, render, heat] = &c.triplet;
        it.rois = c.rois;
        it.consensus = c.consensus;
        it.diagnoses = vlm_diagnose(gt, render, heat, &context, gateway)?;
        if it.diagnoses.is_empty() {
            it.decision = Decision::NoDiagnoses;
            write_critique(&cfg.work_dir, &it)?;
            history.push(it);
            break;
        }

        let mut tokens = Vec::new();
        for d in &it.diagnoses {
            let applied = match journal.apply(&mut repo, &d.patch) {
                Ok(t) => {
                    tokens.push((it.patches.len(), t));
                    AppliedPatch {
                        patch: d.patch.clone(),
                        token: Some(t),
                        reverted: false,
                        error: None,
                    }
                }
                Err(e) => AppliedPatch {
                    patch: d.patch.clone(),
                    token: None,
                    reverted: false,
                    error: Some(e.to_string()),
                },
            };
            it.patches.push(applied);
        }
        if !tokens.is_empty() {
            let trial = sandbox.run(&repo, &cfg.smoke)?;
            let base = before.unwrap_or(f64::NEG_INFINITY);
            let regressed = match trial.psnr_eval {
                Some(p) if trial.error.is_none() && !trial.nan_detected => p < base - cfg.regression_db,
                _ => true,
            };
            if regressed {
                for (i, t) in tokens.iter().rev() {
                    journal.revert(&mut repo, *t)?;
                    it.patches[*i].reverted = true;
                }
            } else {
                it.psnr_after = trial.psnr_eval;
                report = trial;
            }
        }
        if index == cfg.max_refine {
            it.decision = Decision::MaxIterations;
        }
        write_critique(&cfg.work_dir, &it)?;
        history.push(it);
    }
    Ok(RefineOutcome { repo, history, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::diagnose::DIAGNOSE_TAG;
    use crate::critic::synthetic::SceneConfig;
    use crate::critic::views::SyntheticViews;
    use crate::llm::MockBackend;
    use crate::sandbox::ScriptedSandbox;

    fn repo() -> Repository {
        let mut r = Repository::new();
        r.insert("m/config.py", "method_specification = dict(learning_rate=0.05)\n");
        r
    }

    fn report(psnr: f64) -> SmokeReport {
        SmokeReport {
            imports_resolve: true,
            registered: true,
            train_started: true,
            steps_completed: 3000,
            psnr_eval: Some(psnr),
            ..SmokeReport::default()
        }
    }

    fn diagnosis(lr: f64) -> String {
        format!(
            r#"{{"diagnoses":[{{"class":"floater","role":"Sampler","rationale":"r",
            "patch":{{"target":"m/config.py","kind":"hyperparameter-change","key":"learning_rate","value":{lr}}}}}]}}"#
        )
    }

    fn floater() -> SyntheticViews {
        SyntheticViews(SceneConfig {
            floater: true,
            ..SceneConfig::default()
        })
    }

    #[test]
    fn target_reached_on_second_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let sb = ScriptedSandbox::new(vec![report(20.0), report(31.0)]);
        let gw = Gateway::mock(MockBackend::new().push(DIAGNOSE_TAG, diagnosis(0.02)));
        let out = refine(&repo(), &floater(), 30.0, &sb, &gw, &RefineConfig::new(dir.path())).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.history[1].decision, Decision::TargetReached);
        assert!(out.repo.get("m/config.py").unwrap().contains("learning_rate=0.02"));
        assert!(dir.path().join("critique_1.json").exists());
        assert!(dir.path().join("critique_1/heatmap.png").exists());
    }

    #[test]
    fn silent_critic_stops_at_once() {
        let dir = tempfile::tempdir().unwrap();
        let sb = ScriptedSandbox::new(vec![report(20.0)]);
        let gw = Gateway::mock(MockBackend::new().push(DIAGNOSE_TAG, r#"{"diagnoses":[]}"#));
        let out = refine(&repo(), &floater(), 30.0, &sb, &gw, &RefineConfig::new(dir.path())).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].decision, Decision::NoDiagnoses);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("critique_1.json")).unwrap()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["consensus", "decision", "diagnoses", "patches", "rois"]);
        assert!(v["consensus"]["flagged"][0].as_u64().unwrap() > 0);
    }

    #[test]
    fn worsening_patches_are_all_reverted() {
        let dir = tempfile::tempdir().unwrap();
        let mut reports = vec![report(20.0)];
        let mut mock = MockBackend::new();
        for i in 0..5 {
            reports.push(report(19.0 - i as f64));
            mock = mock.push(DIAGNOSE_TAG, diagnosis(0.1 * (i + 1) as f64));
        }
        let sb = ScriptedSandbox::new(reports);
        let out = refine(&repo(), &floater(), 30.0, &sb, &Gateway::mock(mock), &RefineConfig::new(dir.path())).unwrap();
        assert_eq!(out.history.len(), 5);
        assert_eq!(out.history[4].decision, Decision::MaxIterations);
        assert!(out.history.iter().all(|it| it.patches.iter().all(|p| p.reverted)));
        assert_eq!(out.repo, repo());
    }

    #[test]
    fn small_regressions_are_kept() {
        let dir = tempfile::tempdir().unwrap();
        let sb = ScriptedSandbox::new(vec![report(20.0), report(19.95)]);
        let gw = Gateway::mock(MockBackend::new().push(DIAGNOSE_TAG, diagnosis(0.02)));
        let cfg = RefineConfig {
            max_refine: 1,
            ..RefineConfig::new(dir.path())
        };
        let out = refine(&repo(), &floater(), 30.0, &sb, &gw, &cfg).unwrap();
        assert!(!out.history[0].patches[0].reverted);
        assert_ne!(out.repo, repo());
    }
}
