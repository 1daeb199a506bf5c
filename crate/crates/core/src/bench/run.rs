use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ladder_evaluate, llm_score, novelty_coverage, round2, BenchError, NoveltyItem, DEFAULT_TOLERANCE_DB};
use crate::llm::{Gateway, LlmRequest};
use crate::repo::Repository;
use crate::sandbox::SmokeReport;

pub const REPORT_COLUMNS: [&str; 10] = ["id", "imports", "trainable", "stable", "converged", "C", "I", "M", "W", "score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchEntry {
    pub id: String,
    pub paper_md: PathBuf,
    #[serde(default)]
    pub judgments: Option<PathBuf>,
    pub psnr_target: f64,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

/// Entries with paths resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<BenchEntry>, BenchError> {
    let err = |m: String| BenchError::ManifestError(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut entries: Vec<BenchEntry> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    if entries.is_empty() {
        return Err(err("no entries".into()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut ids = BTreeSet::new();
    for e in &mut entries {
        if !ids.insert(e.id.clone()) {
            return Err(err(format!("duplicate id {}", e.id)));
        }
        e.paper_md = base.join(&e.paper_md);
        e.judgments = e.judgments.as_ref().map(|j| base.join(j));
        e.dataset = e.dataset.as_ref().map(|d| base.join(d));
        for p in std::iter::once(&e.paper_md).chain(e.judgments.iter()) {
            if !p.is_file() {
                return Err(err(format!("{}: {} does not exist", e.id, p.display())));
            }
        }
    }
    Ok(entries)
}

pub fn load_judgments(path: &Path) -> Result<Vec<NoveltyItem>, BenchError> {
    let err = |m: String| BenchError::ManifestError(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let items: Vec<NoveltyItem> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    for it in &items {
        it.check()?;
    }
    Ok(items)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: SmokeReport,
    pub repo: Option<Repository>,
}

/// The system under test. A failed synthesis is an `Ok` with a failing
/// report; `Err` means the run itself could not happen.
pub trait BenchRunner {
    fn run(&self, entry: &BenchEntry) -> Result<RunOutput, String>;
}

impl<F: Fn(&BenchEntry) -> Result<RunOutput, String>> BenchRunner for F {
    fn run(&self, entry: &BenchEntry) -> Result<RunOutput, String> {
        self(entry)
    }
}

pub trait JudgmentSource {
    /// `None` leaves the metric columns empty.
    fn judge(&self, entry: &BenchEntry, run: &RunOutput) -> Result<Option<Vec<NoveltyItem>>, BenchError>;
}

/// Annotated judgment files named by the manifest.
pub struct FixtureJudgments;

impl JudgmentSource for FixtureJudgments {
    fn judge(&self, entry: &BenchEntry, _: &RunOutput) -> Result<Option<Vec<NoveltyItem>>, BenchError> {
        entry.judgments.as_deref().map(load_judgments).transpose()
    }
}

pub const JUDGE_TAG: &str = "judge";

const JUDGE_PROMPT: &str = "You grade a generated implementation against the paper it implements. List every novel \
component of the paper with a weight in [0, 1] for its emphasis, whether the code implements it correctly, partially \
or not at all, a level from {0, 0.2, 0.4, 0.6, 0.8, 1.0}, and where the paper states a hyperparameter value, that \
value and the one used in the code. Reply with JSON only.";

static JUDGE_SCHEMA: LazyLock<Value> = LazyLock::new(|| {
    json!({
        "type": "object",
        "required": ["items"],
        "properties": {"items": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "w", "status", "level"],
            "properties": {
                "id": {"type": "string"},
                "description": {"type": "string"},
                "w": {"type": "number"},
                "theta": {"type": ["number", "null"]},
                "theta_hat": {"type": ["number", "null"]},
                "status": {"type": "string", "enum": ["correct", "incorrect-partial", "missing"]},
                "level": {"type": "number"}
            }
        }}}
    })
});

/// A language model as judge.
pub struct GatewayJudge<'a>(pub &'a Gateway);

impl JudgmentSource for GatewayJudge<'_> {
    fn judge(&self, entry: &BenchEntry, run: &RunOutput) -> Result<Option<Vec<NoveltyItem>>, BenchError> {
        let fail = |reason: String| BenchError::Judge {
            id: entry.id.clone(),
            reason,
        };
        let paper = fs::read_to_string(&entry.paper_md).map_err(|e| fail(e.to_string()))?;
        let mut code = String::new();
        if let Some(repo) = &run.repo {
            for (p, src) in &repo.files {
                let _ = writeln!(code, "=== {p}\n{src}");
            }
        }
        let req = LlmRequest::new(JUDGE_TAG, self.0.model_for(JUDGE_TAG))
            .system(JUDGE_PROMPT)
            .user(format!("Paper:\n{paper}\n\nImplementation:\n{code}"))
            .with_schema(JUDGE_SCHEMA.clone())
            .with_temperature(0.0);
        let resp = self.0.complete_structured(&req).map_err(|e| fail(e.to_string()))?;
        let items = resp.structured.and_then(|v| v.get("items").cloned()).unwrap_or(Value::Null);
        let items: Vec<NoveltyItem> = serde_json::from_value(items).map_err(|e| fail(e.to_string()))?;
        for it in &items {
            it.check()?;
        }
        Ok(Some(items))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub imports: bool,
    pub trainable: bool,
    pub stable: bool,
    pub converged: bool,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "I")]
    pub i: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub score: Option<f64>,
}

/// Column means; ladder columns are the fraction of papers on that rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMean {
    pub imports: f64,
    pub trainable: f64,
    pub stable: f64,
    pub converged: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "I")]
    pub i: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub mean: BenchMean,
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.2}"))
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.id,
                r.imports,
                r.trainable,
                r.stable,
                r.converged,
                cell(r.c),
                cell(r.i),
                cell(r.m),
                cell(r.w),
                cell(r.score)
            );
        }
        let m = &self.mean;
        let _ = writeln!(
            out,
            "mean,{:.2},{:.2},{:.2},{:.2},{},{},{},{},{}",
            m.imports,
            m.trainable,
            m.stable,
            m.converged,
            cell(m.c),
            cell(m.i),
            cell(m.m),
            cell(m.w),
            cell(m.score)
        );
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One row per manifest entry, in manifest order.
pub fn run_bench(
    entries: &[BenchEntry],
    runner: &dyn BenchRunner,
    judge: &dyn JudgmentSource,
) -> Result<BenchReport, BenchError> {
    if entries.is_empty() {
        return Err(BenchError::ManifestError("no entries".into()));
    }
    let mut rows = Vec::new();
    let mut raw: Vec<Option<[f64; 5]>> = Vec::new();
    for e in entries {
        let out = runner.run(e).map_err(|reason| BenchError::Runner {
            id: e.id.clone(),
            reason,
        })?;
        let ladder = ladder_evaluate(&out.report, e.psnr_target, DEFAULT_TOLERANCE_DB)?;
        let metrics = match judge.judge(e, &out)? {
            Some(items) => {
                let cov = novelty_coverage(&items)?;
                Some([cov.c, cov.i, cov.m, cov.w, llm_score(&items)?])
            }
            None => None,
        };
        let col = |k: usize| metrics.map(|m| round2(m[k]));
        rows.push(BenchRow {
            id: e.id.clone(),
            imports: ladder.imports_resolve,
            trainable: ladder.trainable,
            stable: ladder.stable,
            converged: ladder.converged,
            c: col(0),
            i: col(1),
            m: col(2),
            w: col(3),
            score: col(4),
        });
        raw.push(metrics);
    }
    let frac = |f: fn(&BenchRow) -> bool| round2(rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64);
    let col_mean = |k: usize| mean(raw.iter().flatten().map(|m| m[k])).map(round2);
    let mean = BenchMean {
        imports: frac(|r| r.imports),
        trainable: frac(|r| r.trainable),
        stable: frac(|r| r.stable),
        converged: frac(|r| r.converged),
        c: col_mean(0),
        i: col_mean(1),
        m: col_mean(2),
        w: col_mean(3),
        score: col_mean(4),
    };
    Ok(BenchReport { rows, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn trained(_: &BenchEntry) -> Result<RunOutput, String> {
        Ok(RunOutput {
            report: SmokeReport {
                imports_resolve: true,
                registered: true,
                train_started: true,
                steps_completed: 3000,
                loss_first: Some(0.2),
                loss_last: Some(0.01),
                psnr_eval: Some(24.8),
                ..SmokeReport::default()
            },
            repo: None,
        })
    }

    #[test]
    fn two_fixture_papers() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.md", "# A\n");
        write(dir.path(), "b.md", "# B\n");
        write(
            dir.path(),
            "a.json",
            r#"[{"id":"x","w":1.0,"status":"correct","level":1.0,"theta":1.0,"theta_hat":1.05},
                {"id":"y","w":0.5,"status":"incorrect-partial","level":0.4,"theta":2.0,"theta_hat":2.5}]"#,
        );
        write(dir.path(), "b.json", r#"[{"id":"x","w":1.0,"status":"missing","level":0.0}]"#);
        let m = write(
            dir.path(),
            "bench.json",
            r#"[{"id":"a","paper_md":"a.md","judgments":"a.json","psnr_target":25.0},
                {"id":"b","paper_md":"b.md","judgments":"b.json","psnr_target":26.0}]"#,
        );
        let entries = load_manifest(&m).unwrap();
        let report = run_bench(&entries, &trained, &FixtureJudgments).unwrap();
        assert_eq!(report.rows.len(), 2);
        let a = &report.rows[0];
        assert_eq!((a.c, a.i, a.m, a.w, a.score), (Some(0.5), Some(0.5), Some(0.0), Some(0.5), Some(0.8)));
        assert!(a.converged);
        let b = &report.rows[1];
        assert_eq!((b.c, b.m, b.w, b.score), (Some(0.0), Some(1.0), Some(0.0), Some(0.0)));
        assert!(b.stable && !b.converged);
        assert_eq!(report.mean.converged, 0.5);
        assert_eq!(report.mean.score, Some(0.4));

        let csv = report.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "id,imports,trainable,stable,converged,C,I,M,W,score");
        assert_eq!(csv.lines().nth(1).unwrap(), "a,true,true,true,true,0.50,0.50,0.00,0.50,0.80");
        let v: Value = serde_json::from_str(&report.to_json()).unwrap();
        let keys: BTreeSet<&str> = v["rows"][0].as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, REPORT_COLUMNS.into_iter().collect());
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.json", "[]");
        assert!(matches!(load_manifest(&empty), Err(BenchError::ManifestError(_))));
        let dangling = write(dir.path(), "d.json", r#"[{"id":"a","paper_md":"nope.md","psnr_target":1.0}]"#);
        assert!(matches!(load_manifest(&dangling), Err(BenchError::ManifestError(_))));
        assert!(matches!(run_bench(&[], &trained, &FixtureJudgments), Err(BenchError::ManifestError(_))));
    }

    #[test]
    fn gateway_judge_parses_items() {
        use crate::llm::MockBackend;
        let dir = tempfile::tempdir().unwrap();
        let md = write(dir.path(), "a.md", "# A\n");
        let entry = BenchEntry {
            id: "a".into(),
            paper_md: md,
            judgments: None,
            psnr_target: 25.0,
            dataset: None,
        };
        let gw = Gateway::mock(
            MockBackend::new().push(JUDGE_TAG, r#"{"items":[{"id":"x","w":1.0,"status":"correct","level":1.0}]}"#),
        );
        let items = GatewayJudge(&gw).judge(&entry, &trained(&entry).unwrap()).unwrap().unwrap();
        assert_eq!(items.len(), 1);
    }
}
