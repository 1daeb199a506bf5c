//! Executability ladder and novelty-coverage metrics.

mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::SmokeReport;

pub use run::{
    load_judgments, load_manifest, run_bench, BenchEntry, BenchReport, BenchRow, BenchRunner, FixtureJudgments,
    GatewayJudge, JudgmentSource, RunOutput, REPORT_COLUMNS,
};

/// Ladder tolerance below the paper PSNR, in dB.
pub const DEFAULT_TOLERANCE_DB: f64 = 0.5;

/// Allowed implementation levels.
pub const LEVELS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no novelty items")]
    EmptyItemSet,
    #[error("novelty weights sum to zero")]
    ZeroWeightSum,
    #[error("invalid smoke report: {0}")]
    InvalidReport(String),
    #[error("invalid novelty item {id}: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("manifest: {0}")]
    ManifestError(String),
    #[error("run of {id} failed: {reason}")]
    Runner { id: String, reason: String },
    #[error("judging {id} failed: {reason}")]
    Judge { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemStatus {
    Correct,
    IncorrectPartial,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyItem {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<f64>,
    pub status: ItemStatus,
    pub level: f64,
}

impl NoveltyItem {
    pub fn check(&self) -> Result<(), BenchError> {
        let bad = |reason: String| {
            Err(BenchError::InvalidItem {
                id: self.id.clone(),
                reason,
            })
        };
        if !(0.0..=1.0).contains(&self.w) {
            return bad(format!("weight {} outside [0, 1]", self.w));
        }
        if !LEVELS.iter().any(|l| (l - self.level).abs() < 1e-9) {
            return bad(format!("level {} is not one of {LEVELS:?}", self.level));
        }
        if self.status == ItemStatus::Missing && self.level != 0.0 {
            return bad("missing items have level 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LadderResult {
    pub imports_resolve: bool,
    pub trainable: bool,
    pub stable: bool,
    pub converged: bool,
}

impl LadderResult {
    /// Highest rung reached.
    pub fn level(&self) -> &'static str {
        match (self.imports_resolve, self.trainable, self.stable, self.converged) {
            (_, _, _, true) => "converged",
            (_, _, true, _) => "stable",
            (_, true, _, _) => "trainable",
            (true, _, _, _) => "imports",
            _ => "none",
        }
    }

    pub fn is_monotone(&self) -> bool {
        (!self.converged || self.stable) && (!self.stable || self.trainable) && (!self.trainable || self.imports_resolve)
    }
}

pub fn ladder_evaluate(report: &SmokeReport, psnr_target: f64, tolerance: f64) -> Result<LadderResult, BenchError> {
    report.check_invariants().map_err(BenchError::InvalidReport)?;
    let imports_resolve = report.imports_resolve;
    let trainable = imports_resolve && report.train_started && report.steps_completed > 0;
    let stable = trainable
        && !report.nan_detected
        && matches!((report.loss_first, report.loss_last), (Some(a), Some(b)) if b <= a);
    let converged = stable && report.psnr_eval.is_some_and(|p| p >= psnr_target - tolerance);
    Ok(LadderResult {
        imports_resolve,
        trainable,
        stable,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub c: f64,
    pub i: f64,
    pub m: f64,
    pub w: f64,
    /// No item carried both values, so `w` is 0 by convention.
    pub w_undefined: bool,
}

/// Hyperparameter match: `|theta - theta_hat| < 0.1 |theta|`.
pub fn theta_matches(theta: f64, theta_hat: f64) -> bool {
    (theta - theta_hat).abs() < 0.1 * theta.abs()
}

pub fn novelty_coverage(items: &[NoveltyItem]) -> Result<Coverage, BenchError> {
    if items.is_empty() {
        return Err(BenchError::EmptyItemSet);
    }
    for it in items {
        it.check()?;
    }
    let n = items.len() as f64;
    let count = |s: ItemStatus| items.iter().filter(|i| i.status == s).count() as f64;
    let paired: Vec<(f64, f64)> = items.iter().filter_map(|i| Some((i.theta?, i.theta_hat?))).collect();
    let matched = paired.iter().filter(|(t, h)| theta_matches(*t, *h)).count() as f64;
    let c = count(ItemStatus::Correct) / n;
    let i = count(ItemStatus::IncorrectPartial) / n;
    Ok(Coverage {
        c,
        i,
        m: 1.0 - c - i,
        w: if paired.is_empty() { 0.0 } else { matched / paired.len() as f64 },
        w_undefined: paired.is_empty(),
    })
}

/// Weighted mean implementation level.
pub fn llm_score(items: &[NoveltyItem]) -> Result<f64, BenchError> {
    if items.is_empty() {
        return Err(BenchError::EmptyItemSet);
    }
    for it in items {
        it.check()?;
    }
    let total: f64 = items.iter().map(|i| i.w).sum();
    if total <= 0.0 {
        return Err(BenchError::ZeroWeightSum);
    }
    Ok(items.iter().map(|i| i.w * i.level).sum::<f64>() / total)
}

/// Half-up rounding to two decimals, tolerant of binary representation
/// error just below a half.
pub fn round2(x: f64) -> f64 {
    (x * 100.0 + 0.5 + 1e-9).floor() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(w: f64, status: ItemStatus, level: f64) -> NoveltyItem {
        NoveltyItem {
            id: "x".into(),
            description: String::new(),
            w,
            theta: None,
            theta_hat: None,
            status,
            level,
        }
    }

    fn trained(psnr: f64) -> SmokeReport {
        SmokeReport {
            imports_resolve: true,
            registered: true,
            train_started: true,
            steps_completed: 3000,
            loss_first: Some(0.3),
            loss_last: Some(0.01),
            psnr_eval: Some(psnr),
            ..SmokeReport::default()
        }
    }

    #[test]
    fn ladder_rungs() {
        let all = ladder_evaluate(&trained(25.0), 25.3, DEFAULT_TOLERANCE_DB).unwrap();
        assert_eq!((all.imports_resolve, all.trainable, all.stable, all.converged), (true, true, true, true));
        assert_eq!(all.level(), "converged");
        assert!(!ladder_evaluate(&trained(24.7), 25.3, DEFAULT_TOLERANCE_DB).unwrap().converged);

        let mut nan = trained(25.0);
        nan.nan_detected = true;
        let r = ladder_evaluate(&nan, 25.0, DEFAULT_TOLERANCE_DB).unwrap();
        assert!(r.trainable && !r.stable && !r.converged);

        let failed = SmokeReport::failed("import", Some("m/model.py"), "ImportError");
        assert_eq!(ladder_evaluate(&failed, 25.0, 0.5).unwrap(), LadderResult::default());
    }

    #[test]
    fn inconsistent_report_is_invalid() {
        let mut r = trained(25.0);
        r.imports_resolve = false;
        assert!(matches!(ladder_evaluate(&r, 25.0, 0.5), Err(BenchError::InvalidReport(_))));
    }

    #[test]
    fn w_over_paired_items() {
        let mut a = item(1.0, ItemStatus::Correct, 1.0);
        a.theta = Some(1.0);
        a.theta_hat = Some(1.05);
        let mut b = item(1.0, ItemStatus::Correct, 1.0);
        b.theta = Some(2.0);
        b.theta_hat = Some(2.5);
        let c = item(1.0, ItemStatus::IncorrectPartial, 0.4);
        let cov = novelty_coverage(&[a, b, c]).unwrap();
        assert_eq!(cov.w, 0.5);
        assert!(!cov.w_undefined);
    }

    #[test]
    fn all_missing() {
        let items = vec![item(1.0, ItemStatus::Missing, 0.0); 3];
        let cov = novelty_coverage(&items).unwrap();
        assert_eq!((cov.c, cov.i, cov.m, cov.w, cov.w_undefined), (0.0, 0.0, 1.0, 0.0, true));
        assert_eq!(llm_score(&items).unwrap(), 0.0);
    }

    #[test]
    fn score_examples() {
        let s = llm_score(&[item(1.0, ItemStatus::Correct, 1.0), item(0.5, ItemStatus::IncorrectPartial, 0.4)]).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
        assert_eq!(llm_score(&vec![item(0.3, ItemStatus::Correct, 1.0); 4]).unwrap(), 1.0);
        assert!(matches!(llm_score(&[item(0.0, ItemStatus::Correct, 1.0)]), Err(BenchError::ZeroWeightSum)));
        assert!(matches!(novelty_coverage(&[]), Err(BenchError::EmptyItemSet)));
    }

    #[test]
    fn item_invariants() {
        assert!(item(1.2, ItemStatus::Correct, 1.0).check().is_err());
        assert!(item(1.0, ItemStatus::Correct, 0.5).check().is_err());
        assert!(item(1.0, ItemStatus::Missing, 0.2).check().is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round2(0.375), 0.38);
        assert_eq!(round2(0.655172), 0.66);
        assert_eq!(round2(0.125), 0.13);
        assert_eq!(round2(1.0 / 6.0), 0.17);
    }

    fn arb_item() -> impl Strategy<Value = NoveltyItem> {
        (0.0f64..=1.0, 0usize..3, 1usize..6).prop_map(|(w, s, l)| {
            let status = [ItemStatus::Correct, ItemStatus::IncorrectPartial, ItemStatus::Missing][s];
            let level = if status == ItemStatus::Missing { 0.0 } else { LEVELS[l] };
            item(w, status, level)
        })
    }

    proptest! {
        #[test]
        fn shares_sum_to_one(items in proptest::collection::vec(arb_item(), 1..40)) {
            let cov = novelty_coverage(&items).unwrap();
            prop_assert!((cov.c + cov.i + cov.m - 1.0).abs() < 1e-9);
            for v in [cov.c, cov.i, cov.m, cov.w] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn score_scale_invariant(items in proptest::collection::vec(arb_item(), 1..20), k in 0usize..8) {
            prop_assume!(items.iter().map(|i| i.w).sum::<f64>() > 0.0);
            let scale = 2f64.powi(-(k as i32));
            let scaled: Vec<NoveltyItem> = items.iter().map(|i| NoveltyItem { w: i.w * scale, ..i.clone() }).collect();
            prop_assert_eq!(llm_score(&items).unwrap(), llm_score(&scaled).unwrap());
        }
    }
}
