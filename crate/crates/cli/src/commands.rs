use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nerfsynth_core::bench::{
    ladder_evaluate, load_judgments, load_manifest, run_bench, BenchEntry, BenchError, GatewayJudge, JudgmentSource,
    NoveltyItem, RunOutput,
};
use nerfsynth_core::citation::FixtureFetcher;
use nerfsynth_core::critic::synthetic::SceneConfig;
use nerfsynth_core::critic::{refine, SyntheticViews, ViewDir, ViewSource};
use nerfsynth_core::grammar::{load_grammar, validate_files};
use nerfsynth_core::llm::{Gateway, MockBackend};
use nerfsynth_core::paper::{parse_markdown, KnowledgeBase};
use nerfsynth_core::sandbox::HostSandbox;
use nerfsynth_core::synth::{write_artifacts, write_failure, EventLog};
use nerfsynth_core::{synthesize, PaperDocument, PluginGrammar, Repository, RunConfig, Sandbox, SmokeReport, StubSandbox};
use serde_json::{json, Value};

use crate::{EvalArgs, Failure, Format, InspectArgs, RunArgs, SandboxMode, SynthArgs};

const SHIM_ENV: &str = "NERFSYNTH_SHIM";
const DEFAULT_SHIM: &str = "nerfsynth-shim";

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn run_err(msg: impl std::fmt::Display) -> Failure {
    Failure::Run(msg.to_string())
}

fn must_exist(flag: &str, p: &Path) -> Result<(), Failure> {
    if p.exists() {
        Ok(())
    } else {
        Err(usage(format!("{flag} {}: no such file or directory", p.display())))
    }
}

/// Everything a synthesis run needs besides the paper.
struct Setup {
    config: RunConfig,
    grammar: PluginGrammar,
    kb: KnowledgeBase,
    gateway: Gateway,
    sandbox: Box<dyn Sandbox>,
}

fn setup(run: &RunArgs, out: &Path) -> Result<Setup, Failure> {
    for (flag, p) in [("--kb", &run.kb), ("--grammar", &run.grammar), ("--llm", &run.llm), ("--config", &run.config)] {
        if let Some(p) = p {
            must_exist(flag, p)?;
        }
    }
    let mut config = match &run.config {
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(n) = run.smoke_iters {
        config.smoke_iters = n;
    }
    if let Some(n) = run.max_refine {
        config.max_refine = n;
    }
    if config.smoke_iters == 0 {
        return Err(usage("--smoke-iters must be positive"));
    }
    let grammar = match &run.grammar {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            load_grammar(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => PluginGrammar::default_grammar(),
    };
    let kb = match &run.kb {
        Some(p) => KnowledgeBase::open(p, &grammar).map_err(|e| usage(format!("--kb {}: {e}", p.display())))?,
        None => KnowledgeBase::empty(),
    };
    let gateway = match &run.llm {
        Some(p) => gateway(p).map_err(|e| usage(format!("--llm {}: {e}", p.display())))?,
        None => Gateway::null(),
    };
    let sandbox: Box<dyn Sandbox> = match run.sandbox {
        SandboxMode::Stub => Box::new(StubSandbox::new()),
        SandboxMode::Host => {
            let program = std::env::var(SHIM_ENV).unwrap_or_else(|_| DEFAULT_SHIM.to_string());
            Box::new(HostSandbox::new(&program, out.join("sandbox")))
        }
    };
    Ok(Setup {
        config,
        grammar,
        kb,
        gateway,
        sandbox,
    })
}

/// A gateway config has a `mode`; anything else is a mock script.
fn gateway(path: &Path) -> Result<Gateway, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let value: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if value.get("mode").is_some_and(Value::is_string) {
        Gateway::load(path).map_err(|e| e.to_string())
    } else {
        Ok(Gateway::mock(MockBackend::from_json(&value).map_err(|e| e.to_string())?))
    }
}

fn read_paper(path: &Path) -> Result<PaperDocument, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_markdown(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Cited papers come from a `graph.json` next to the paper, if any.
fn fetcher_for(paper: &Path) -> Result<FixtureFetcher, String> {
    let dir = paper.parent().unwrap_or(Path::new("."));
    let graph = dir.join("graph.json");
    if graph.exists() {
        FixtureFetcher::load(&graph).map_err(|e| e.to_string())
    } else {
        Ok(FixtureFetcher::new(dir.to_path_buf(), BTreeMap::new(), BTreeMap::new()))
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    fs::write(path, text).map_err(|e| run_err(format!("{}: {e}", path.display())))
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    must_exist("--paper", &args.paper)?;
    let s = setup(&args.run, &args.out)?;
    let mut config = s.config;
    if args.psnr_target.is_some() {
        config.psnr_target = args.psnr_target;
    }
    let doc = read_paper(&args.paper).map_err(usage)?;
    let fetcher = fetcher_for(&args.paper).map_err(usage)?;

    let out = match synthesize(&doc, &s.kb, &s.grammar, &fetcher, &s.gateway, s.sandbox.as_ref(), &config.synth(None)) {
        Ok(o) => o,
        Err(f) => {
            write_failure(&args.out, &f).map_err(run_err)?;
            return Err(run_err(&f));
        }
    };
    write_artifacts(&args.out, &out).map_err(run_err)?;
    fs::write(args.out.join("config.json"), config.to_json()).map_err(run_err)?;
    let ladder = ladder_evaluate(&out.report, config.psnr_target.unwrap_or(f64::INFINITY), config.ladder_tolerance_db)
        .map_err(run_err)?;
    println!(
        "{}: {} files, ladder {}, psnr {}",
        doc.id,
        out.repo.files.len(),
        ladder.level(),
        out.report.psnr_eval.map_or("n/a".into(), |p| format!("{p:.2}"))
    );

    let Some(target) = config.psnr_target else {
        return Ok(());
    };
    if config.max_refine == 0 {
        return Ok(());
    }
    let views_dir = args.out.join("views");
    let views: Box<dyn ViewSource> = if views_dir.is_dir() {
        Box::new(ViewDir(views_dir))
    } else {
        Box::new(SyntheticViews(SceneConfig::default()))
    };
    let refine_dir = args.out.join("refine");
    let refined = refine(
        &out.repo,
        views.as_ref(),
        target,
        s.sandbox.as_ref(),
        &s.gateway,
        &config.refine(&refine_dir, None),
    )
    .map_err(run_err)?;
    refined.repo.write_dir(&refine_dir.join("repo")).map_err(run_err)?;
    write_json(&refine_dir.join("history.json"), &json!(refined.history))?;
    write_json(&refine_dir.join("smoke_report.json"), &json!(refined.report))?;
    println!(
        "refine: {} iterations, last decision {:?}, psnr {}",
        refined.history.len(),
        refined.history.last().map(|h| h.decision),
        refined.report.psnr_eval.map_or("n/a".into(), |p| format!("{p:.2}"))
    );
    Ok(())
}

/// Manifest judgments first, then `--judgments`, then the model.
struct CliJudge<'a> {
    dir: Option<PathBuf>,
    map: BTreeMap<String, Vec<NoveltyItem>>,
    gateway: Option<&'a Gateway>,
}

impl JudgmentSource for CliJudge<'_> {
    fn judge(&self, entry: &BenchEntry, run: &RunOutput) -> Result<Option<Vec<NoveltyItem>>, BenchError> {
        if let Some(p) = &entry.judgments {
            return load_judgments(p).map(Some);
        }
        if let Some(items) = self.map.get(&entry.id) {
            return Ok(Some(items.clone()));
        }
        if let Some(dir) = &self.dir {
            let p = dir.join(format!("{}.json", entry.id));
            if p.exists() {
                return load_judgments(&p).map(Some);
            }
        }
        match self.gateway {
            Some(g) => GatewayJudge(g).judge(entry, run),
            None => Ok(None),
        }
    }
}

fn judge_from<'a>(path: Option<&Path>, gateway: Option<&'a Gateway>) -> Result<CliJudge<'a>, Failure> {
    let mut judge = CliJudge {
        dir: None,
        map: BTreeMap::new(),
        gateway,
    };
    match path {
        Some(p) if p.is_dir() => judge.dir = Some(p.to_path_buf()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("--judgments {}: {e}", p.display())))?;
            judge.map = serde_json::from_str(&text).map_err(|e| run_err(format!("--judgments {}: {e}", p.display())))?;
        }
        None => {}
    }
    Ok(judge)
}

pub fn eval(args: &EvalArgs) -> Result<(), Failure> {
    must_exist("--bench", &args.bench)?;
    if let Some(j) = &args.judgments {
        must_exist("--judgments", j)?;
    }
    let s = setup(&args.run, &args.out)?;
    let entries = load_manifest(&args.bench).map_err(run_err)?;
    let runner = |e: &BenchEntry| -> Result<RunOutput, String> {
        let doc = read_paper(&e.paper_md)?;
        let fetcher = fetcher_for(&e.paper_md)?;
        let cfg = s.config.synth(e.dataset.clone());
        match synthesize(&doc, &s.kb, &s.grammar, &fetcher, &s.gateway, s.sandbox.as_ref(), &cfg) {
            Ok(o) => Ok(RunOutput {
                report: o.report,
                repo: Some(o.repo),
            }),
            Err(f) => Ok(RunOutput {
                report: f.report.clone().unwrap_or_else(|| SmokeReport::failed("import", None, f.error.to_string())),
                repo: f.repo.clone(),
            }),
        }
    };
    let judge = judge_from(args.judgments.as_deref(), args.run.llm.is_some().then_some(&s.gateway))?;
    let report = run_bench(&entries, &runner, &judge).map_err(run_err)?;
    fs::create_dir_all(&args.out).map_err(run_err)?;
    let (csv, json) = (report.to_csv(), report.to_json());
    fs::write(args.out.join("report.csv"), &csv).map_err(run_err)?;
    fs::write(args.out.join("report.json"), &json).map_err(run_err)?;
    print!("{}", if args.format == Format::Csv { csv } else { json });
    Ok(())
}

pub fn inspect(args: &InspectArgs) -> Result<(), Failure> {
    must_exist("--out", &args.out)?;
    let grammar = match &args.grammar {
        Some(p) => {
            must_exist("--grammar", p)?;
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            load_grammar(&text).map_err(|e| usage(e.to_string()))?
        }
        None => PluginGrammar::default_grammar(),
    };
    let events = fs::read_to_string(args.out.join("events.jsonl"))
        .map_err(|e| run_err(format!("{}: {e}", args.out.join("events.jsonl").display())))?;
    let log = EventLog::from_jsonl(&events).map_err(run_err)?;
    let report: Option<SmokeReport> = match fs::read_to_string(args.out.join("smoke_report.json")) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(run_err)?),
        Err(_) => None,
    };
    let repo_dir = args.out.join("repo");
    let repo = if repo_dir.is_dir() {
        Some(Repository::read_dir(&repo_dir).map_err(run_err)?)
    } else {
        None
    };
    let validation = repo.as_ref().map(|r| validate_files(&grammar, &r.records()));
    let ladder = match &report {
        Some(r) => Some(ladder_evaluate(r, f64::INFINITY, 0.0).map_err(run_err)?.level()),
        None => None,
    };
    let summary = json!({
        "terminal": log.terminal(),
        "events": log.events().len(),
        "files": repo.as_ref().map(|r| r.files.len()),
        "valid": validation.as_ref().map(|v| v.pass),
        "violations": validation.as_ref().map(|v| v.violations.len()),
        "ladder": ladder,
        "psnr_eval": report.as_ref().and_then(|r| r.psnr_eval),
    });
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).expect("json serializes")),
        Format::Csv => {
            println!("key,value");
            for (k, v) in summary.as_object().expect("object") {
                let v = match v {
                    Value::Null => String::new(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                println!("{k},{v}");
            }
        }
    }
    if let Some(v) = validation.filter(|v| !v.pass) {
        eprintln!("{}", v.summary());
    }
    Ok(())
}
