use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use super::{
    construct_dag, freeze_interfaces, implement_node, integration_test, repair, Budgets, EventLog, FrozenInterface,
    SynthError, SynthesisState, TERMINAL_PHASE,
};
use crate::citation::{is_resolved, resolve_transitive, CitationGraph, ResolveOptions, WebFetcher};
use crate::grammar::{DerivationPlan, PluginGrammar};
use crate::llm::Gateway;
use crate::paper::{clean_document, validate_completeness, KnowledgeBase, PaperDocument};
use crate::repo::{build_repo_dag, Repository};
use crate::sandbox::{Sandbox, SmokeError, SmokeReport, SmokeRequest};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Python package name; derived from the paper id when `None`.
    pub package: Option<String>,
    pub smoke: SmokeRequest,
    pub budgets: Budgets,
    /// Knowledge-base exemplars per run.
    pub exemplars: usize,
    /// Lines of each exemplar file shown to a file agent.
    pub snippet_lines: usize,
    pub clean: bool,
    pub resolve: ResolveOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            package: None,
            smoke: SmokeRequest::default(),
            budgets: Budgets::default(),
            exemplars: 2,
            snippet_lines: 40,
            clean: true,
            resolve: ResolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub repo: Repository,
    pub report: SmokeReport,
    pub log: EventLog,
    pub plan: DerivationPlan,
    pub interfaces: BTreeMap<String, FrozenInterface>,
    pub citations: CitationGraph,
    pub uncovered: Vec<usize>,
}

#[derive(Debug)]
pub struct SynthFailure {
    pub error: SynthError,
    pub log: EventLog,
    pub report: Option<SmokeReport>,
    pub repo: Option<Repository>,
}

impl std::fmt::Display for SynthFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "synthesis failed: {}", self.error)
    }
}

impl std::error::Error for SynthFailure {}

fn package_name(doc: &PaperDocument) -> String {
    let mut s: String = doc
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert_str(0, "method_");
    }
    s
}

fn fail(mut log: EventLog, error: SynthError, report: Option<SmokeReport>, repo: Option<Repository>) -> Box<SynthFailure> {
    log.push(TERMINAL_PHASE, None, error.terminal(), error.to_string());
    Box::new(SynthFailure {
        error,
        log,
        report,
        repo,
    })
}

/// Paper in, trainable plugin repository out.
pub fn synthesize(
    doc: &PaperDocument,
    kb: &KnowledgeBase,
    grammar: &PluginGrammar,
    fetcher: &dyn WebFetcher,
    gateway: &Gateway,
    sandbox: &dyn Sandbox,
    config: &SynthConfig,
) -> Result<SynthOutput, Box<SynthFailure>> {
    let mut log = EventLog::new();
    log.push(
        "ingest",
        None,
        "parsed",
        format!(
            "{} headings, {} equations, {} references",
            doc.headings.len(),
            doc.equations.len(),
            doc.references.len()
        ),
    );
    let doc = if config.clean {
        match clean_document(doc, gateway) {
            Ok(d) => {
                log.push("ingest", None, "cleaned", format!("{} -> {} blocks", doc.len(), d.len()));
                d
            }
            Err(e) => {
                log.push("ingest", None, "clean-skipped", e.to_string());
                doc.clone()
            }
        }
    } else {
        doc.clone()
    };
    let missing = validate_completeness(&doc);
    if !missing.is_empty() {
        log.push("ingest", None, "incomplete", missing.join(", "));
    }

    let citations = match resolve_transitive(&doc, fetcher, gateway, config.resolve) {
        Ok(g) => g,
        Err(e) => return Err(fail(log, e.into(), None, None)),
    };
    let (resolved, warnings) = is_resolved(&citations);
    log.push(
        "resolve",
        None,
        if resolved { "resolved" } else { "unresolved" },
        format!("{} papers, {} components; {}", citations.nodes.len(), citations.extracted.len(), warnings.join("; ")),
    );

    let package = config.package.clone().unwrap_or_else(|| package_name(&doc));
    let dag = match construct_dag(&doc, &citations, grammar, gateway, &package) {
        Ok(d) => d,
        Err(e) => return Err(fail(log, e, None, None)),
    };
    log.push("plan", None, "derived", dag.plan.trace.join(" | "));
    let uncovered = dag.uncovered.clone();
    if !uncovered.is_empty() {
        let list: Vec<String> = uncovered.iter().map(|e| format!("({})", e + 1)).collect();
        log.push("plan", None, "uncovered-equations", list.join(" "));
    }

    let mut state = SynthesisState::new(grammar.clone(), dag);
    state.log = log;
    state.budgets = config.budgets;

    let roles = state.plan.roles();
    let chosen: Vec<String> = kb.select_exemplars(&roles, config.exemplars).iter().map(|e| e.id.clone()).collect();
    if chosen.is_empty() {
        state.log.push("plan", None, "degraded-context", "knowledge base offers no exemplars");
    } else {
        state.log.push("plan", None, "exemplars", chosen.join(", "));
        for spec in state.specs.values_mut() {
            for id in &chosen {
                if let Some(s) = kb.snippet(id, &spec.role, config.snippet_lines) {
                    spec.exemplars.push(format!("# from {id}\n{s}"));
                }
            }
        }
    }

    if let Err(e) = freeze_interfaces(&mut state, gateway) {
        return Err(fail(state.log, e, None, Some(state.repo)));
    }
    for path in state.order() {
        if let Err(e) = implement_node(&mut state, &path, gateway) {
            return Err(fail(state.log, e, None, Some(state.repo)));
        }
    }

    loop {
        let mut report = match integration_test(&mut state, sandbox, &config.smoke) {
            Ok(r) => r,
            Err(e) => return Err(fail(state.log, e, None, Some(state.repo))),
        };
        if report.error.is_none() && report.is_trainable() {
            state.log.push(TERMINAL_PHASE, None, "success", format!("{} repair rounds", state.repairs));
            return Ok(SynthOutput {
                repo: state.repo,
                report,
                log: state.log,
                plan: state.plan,
                interfaces: state.interfaces,
                citations,
                uncovered,
            });
        }
        if report.error.is_none() {
            report.error = Some(SmokeError {
                stage: "train".into(),
                file: None,
                traceback: "training completed no steps".into(),
            });
        }
        if let Err(e) = repair(&mut state, &report, gateway) {
            return Err(fail(state.log, e, Some(report), Some(state.repo)));
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// `repo/`, `repo_graph.json`, `interfaces.json`, `plan.json`,
/// `citations.json`, `smoke_report.json` and `events.jsonl` under `out`.
pub fn write_artifacts(out: &Path, output: &SynthOutput) -> io::Result<()> {
    fs::create_dir_all(out)?;
    output.repo.write_dir(&out.join("repo"))?;
    let graph = build_repo_dag(output.repo.records()).map_err(io::Error::other)?;
    write_json(&out.join("repo_graph.json"), &graph.to_json())?;
    write_json(&out.join("interfaces.json"), &output.interfaces)?;
    write_json(&out.join("plan.json"), &output.plan)?;
    write_json(&out.join("citations.json"), &output.citations.to_json())?;
    write_json(&out.join("smoke_report.json"), &output.report)?;
    fs::write(out.join("events.jsonl"), output.log.to_jsonl())
}

/// The event log, the last report and whatever repository exists.
pub fn write_failure(out: &Path, failure: &SynthFailure) -> io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("events.jsonl"), failure.log.to_jsonl())?;
    if let Some(r) = &failure.report {
        write_json(&out.join("smoke_report.json"), r)?;
    }
    if let Some(repo) = &failure.repo {
        repo.write_dir(&out.join("repo"))?;
    }
    Ok(())
}
