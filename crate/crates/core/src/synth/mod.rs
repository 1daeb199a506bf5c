//! Dependency-ordered synthesis of a plugin repository: plan the file DAG,
//! freeze each file's public interface in topological order, implement the
//! files against the frozen interfaces, then smoke-test and repair.

mod dag;
mod freeze;
mod implement;
mod integrate;
mod pipeline;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citation::{CitationError, ComponentSpec};
use crate::grammar::{DerivationPlan, PlanError, PluginGrammar};
use crate::llm::LlmError;
use crate::paper::Equation;
use crate::repo::{topo_sort, FileId, Repository};
use crate::sandbox::{SandboxError, SmokeReport};

pub use dag::{construct_dag, Dag};
pub use freeze::{check_interface, freeze_interfaces};
pub use implement::{check_artifact, extract_code, implement_node, FileArtifact};
pub use integrate::{integration_test, localize_fault, repair};
pub use pipeline::{synthesize, write_artifacts, write_failure, SynthConfig, SynthFailure, SynthOutput};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    NoDerivation(#[from] PlanError),
    #[error("component `{0}` cannot be assigned to any node")]
    UnassignedComponent(String),
    #[error("interface of `{file}` violates its contract: {}", .violations.join("; "))]
    ContractUnsatisfiable { file: String, violations: Vec<String> },
    #[error("implementation of `{file}` fails local checks: {}", .violations.join("; "))]
    LocalContractFailure { file: String, violations: Vec<String> },
    #[error("`{file}` cannot be implemented before `{waiting_on}` is frozen")]
    NotFrozen { file: String, waiting_on: String },
    #[error("unknown plan node `{0}`")]
    UnknownNode(String),
    #[error("smoke report has no error to repair")]
    NothingToRepair,
    #[error("repair budget exhausted")]
    RepairBudgetExhausted(Box<SmokeReport>),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Gateway(#[from] LlmError),
    #[error(transparent)]
    Citation(#[from] CitationError),
}

impl SynthError {
    /// Name of the terminal state this error ends a run in.
    pub fn terminal(&self) -> &'static str {
        match self {
            SynthError::ContractUnsatisfiable { .. } => "ContractUnsatisfiable",
            SynthError::RepairBudgetExhausted(_) => "RepairBudgetExhausted",
            _ => "failure",
        }
    }
}

/// Per-node work order for a file agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub file: FileId,
    pub path: String,
    pub role: String,
    pub components: Vec<ComponentSpec>,
    pub excerpts: Vec<String>,
    pub equations: Vec<Equation>,
    pub exemplars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExportDecl {
    pub name: String,
    #[serde(default)]
    pub signature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImportDecl {
    pub name: String,
    /// Path of the providing file.
    pub from: String,
}

/// A file's committed public API.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrozenInterface {
    pub exports: Vec<ExportDecl>,
    pub imports: Vec<ImportDecl>,
    #[serde(skip)]
    pub frozen: bool,
}

impl FrozenInterface {
    pub fn exports_name(&self, name: &str) -> bool {
        self.exports.iter().any(|e| e.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    /// Attempts per interface, including the first.
    pub freeze: u32,
    /// Attempts per implementation, including the first.
    pub implement: u32,
    /// Repair rounds per run.
    pub repair: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            freeze: 2,
            implement: 3,
            repair: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub ts: u64,
    pub phase: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<String>,
    pub event: String,
    pub detail: String,
}

pub const TERMINAL_PHASE: &str = "done";

/// Append-only log stamped with a logical clock so replays are
/// byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, phase: &str, node: Option<&str>, event: &str, detail: impl Into<String>) {
        self.events.push(Event {
            ts: self.events.len() as u64,
            phase: phase.to_string(),
            node: node.map(str::to_string),
            event: event.to_string(),
            detail: detail.into(),
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn terminal(&self) -> Option<&str> {
        self.events
            .iter()
            .rev()
            .find(|e| e.phase == TERMINAL_PHASE)
            .map(|e| e.event.as_str())
    }

    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(EventLog { events })
    }
}

/// Mutable state threaded through the phases.
#[derive(Debug, Clone)]
pub struct SynthesisState {
    pub grammar: PluginGrammar,
    pub plan: DerivationPlan,
    pub specs: BTreeMap<String, NodeSpec>,
    pub interfaces: BTreeMap<String, FrozenInterface>,
    pub repo: Repository,
    pub attempts: BTreeMap<String, u32>,
    pub repairs: u32,
    pub budgets: Budgets,
    pub log: EventLog,
}

impl SynthesisState {
    pub fn new(grammar: PluginGrammar, dag: Dag) -> Self {
        let mut repo = Repository::new();
        repo.insert(format!("{}/__init__.py", dag.plan.package), "");
        SynthesisState {
            grammar,
            plan: dag.plan,
            specs: dag.specs,
            interfaces: BTreeMap::new(),
            repo,
            attempts: BTreeMap::new(),
            repairs: 0,
            budgets: Budgets::default(),
            log: EventLog::new(),
        }
    }

    /// Plan node paths in dependency order.
    pub fn order(&self) -> Vec<String> {
        plan_order(&self.plan)
    }

    pub fn ancestors(&self, path: &str) -> BTreeSet<String> {
        plan_ancestors(&self.plan, path)
    }

    pub fn role_of(&self, path: &str) -> Option<&str> {
        self.plan.node(path).map(|n| n.role.as_str())
    }

    /// `interfaces.json`: path -> `{exports, imports}`.
    pub fn interfaces_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.interfaces).expect("interfaces serialize")
    }
}

pub fn plan_order(plan: &DerivationPlan) -> Vec<String> {
    let nodes: Vec<String> = plan.nodes.iter().map(|n| n.path.clone()).collect();
    let edges: BTreeSet<(String, String)> = plan.edges.iter().cloned().collect();
    topo_sort(&nodes, &edges, |p: &String| p.clone()).expect("plan edges follow the acyclic role-import relation")
}

pub fn plan_ancestors(plan: &DerivationPlan, path: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![path.to_string()];
    while let Some(n) = stack.pop() {
        for (p, d) in &plan.edges {
            if *d == n && out.insert(p.clone()) {
                stack.push(p.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_log_round_trips_with_logical_clock() {
        let mut log = EventLog::new();
        log.push("freeze", Some("m/config.py"), "frozen", "ok");
        log.push(TERMINAL_PHASE, None, "success", "");
        let text = log.to_jsonl();
        assert!(text.lines().next().unwrap().starts_with("{\"ts\":0,"));
        assert!(!text.lines().nth(1).unwrap().contains("node"));
        assert_eq!(EventLog::from_jsonl(&text).unwrap(), log);
        assert_eq!(log.terminal(), Some("success"));
    }
}
