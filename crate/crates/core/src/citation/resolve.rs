use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use super::{discover_dependencies, extract_each, normalize_name, CitationError, CitationRequirement, ComponentSpec};
use crate::llm::Gateway;
use crate::paper::{parse_markdown, BibEntry, PaperDocument};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("paper `{0}` not found")]
    NotFound(String),
    #[error("paper `{key}` unreadable: {reason}")]
    Unreadable { key: String, reason: String },
}

/// Retrieval of cited papers.
pub trait WebFetcher: Send + Sync {
    fn fetch(&self, entry: &BibEntry) -> Result<PaperDocument, FetchError>;

    /// Component-bearing citations known to the fetcher beyond what the
    /// text reveals.
    fn cited(&self, _key: &str) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Debug, Deserialize)]
struct FixtureIndex {
    papers: BTreeMap<String, String>,
    #[serde(default)]
    cites: BTreeMap<String, Vec<String>>,
}

/// Offline fetcher over `graph.json`: `{papers:{key:path}, cites:{key:[keys]}}`.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    root: PathBuf,
    papers: BTreeMap<String, String>,
    cites: BTreeMap<String, Vec<String>>,
}

impl FixtureFetcher {
    pub fn load(graph_json: &Path) -> Result<Self, FetchError> {
        let bad = |reason: String| FetchError::Unreadable {
            key: graph_json.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(graph_json).map_err(|e| bad(e.to_string()))?;
        let idx: FixtureIndex = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        Ok(FixtureFetcher {
            root: graph_json.parent().unwrap_or(Path::new(".")).to_path_buf(),
            papers: idx.papers,
            cites: idx.cites,
        })
    }

    /// In-memory fixture; paper paths are read relative to `root`.
    pub fn new(root: PathBuf, papers: BTreeMap<String, String>, cites: BTreeMap<String, Vec<String>>) -> Self {
        FixtureFetcher { root, papers, cites }
    }

    pub fn universe(&self) -> BTreeSet<&str> {
        self.papers.keys().map(String::as_str).collect()
    }
}

impl WebFetcher for FixtureFetcher {
    fn fetch(&self, entry: &BibEntry) -> Result<PaperDocument, FetchError> {
        let key = &entry.cite_key;
        let rel = self.papers.get(key).ok_or_else(|| FetchError::NotFound(key.clone()))?;
        let text = fs::read_to_string(self.root.join(rel)).map_err(|e| FetchError::Unreadable {
            key: key.clone(),
            reason: e.to_string(),
        })?;
        parse_markdown(&text).map_err(|e| FetchError::Unreadable {
            key: key.clone(),
            reason: e.to_string(),
        })
    }

    fn cited(&self, key: &str) -> Vec<String> {
        self.cites.get(key).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeState {
    Resolved(Box<PaperDocument>),
    Pending,
    Unresolvable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CitationGraph {
    pub target: String,
    pub nodes: BTreeMap<String, NodeState>,
    /// `(provider, consumer)`.
    pub edges: BTreeSet<(String, String)>,
    /// Citing paper -> what it borrows.
    pub requirements: BTreeMap<String, Vec<CitationRequirement>>,
    /// `(provider, normalized name)` -> spec.
    pub extracted: BTreeMap<(String, String), ComponentSpec>,
    /// `(provider, normalized name)` -> why it could not be extracted.
    pub unresolvable: BTreeMap<(String, String), String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolveOptions {
    pub max_depth: usize,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions { max_depth: 4 }
    }
}

impl CitationGraph {
    pub fn new(target: &PaperDocument) -> Self {
        CitationGraph {
            target: target.id.clone(),
            nodes: BTreeMap::from([(target.id.clone(), NodeState::Resolved(Box::new(target.clone())))]),
            edges: BTreeSet::new(),
            requirements: BTreeMap::new(),
            extracted: BTreeMap::new(),
            unresolvable: BTreeMap::new(),
        }
    }

    pub fn document(&self, key: &str) -> Option<&PaperDocument> {
        match self.nodes.get(key) {
            Some(NodeState::Resolved(d)) => Some(d),
            _ => None,
        }
    }

    /// Extracted components in requirement order, deduplicated.
    pub fn components(&self) -> Vec<&ComponentSpec> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for reqs in self.requirements.values() {
            for r in reqs {
                for name in &r.borrowed {
                    let k = (r.source_key.clone(), normalize_name(name));
                    if let Some(spec) = self.extracted.get(&k) {
                        if seen.insert(k) {
                            out.push(spec);
                        }
                    }
                }
            }
        }
        out
    }

    /// Components borrowed directly by the target paper.
    pub fn direct_components(&self) -> Vec<&ComponentSpec> {
        let mut out = Vec::new();
        for r in self.requirements.get(&self.target).into_iter().flatten() {
            for name in &r.borrowed {
                if let Some(spec) = self.extracted.get(&(r.source_key.clone(), normalize_name(name))) {
                    if !out.contains(&spec) {
                        out.push(spec);
                    }
                }
            }
        }
        out
    }

    /// `citations.json`.
    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|(k, s)| match s {
                NodeState::Resolved(d) => json!({"key": k, "status": "resolved", "title": d.title}),
                NodeState::Pending => json!({"key": k, "status": "pending"}),
                NodeState::Unresolvable(e) => json!({"key": k, "status": "unresolvable", "error": e}),
            })
            .collect();
        let mut status = Vec::new();
        for (consumer, reqs) in &self.requirements {
            for r in reqs {
                for name in &r.borrowed {
                    let k = (r.source_key.clone(), normalize_name(name));
                    let entry = match (self.extracted.get(&k), self.unresolvable.get(&k)) {
                        (Some(spec), _) => json!({
                            "consumer": consumer, "provider": r.source_key, "component": name,
                            "status": "extracted", "kind": spec.kind, "excerpt": spec.excerpt,
                            "equations": spec.equations.len(),
                        }),
                        (None, Some(err)) => json!({
                            "consumer": consumer, "provider": r.source_key, "component": name,
                            "status": "unresolvable", "error": err,
                        }),
                        (None, None) => json!({
                            "consumer": consumer, "provider": r.source_key, "component": name,
                            "status": "pending",
                        }),
                    };
                    status.push(entry);
                }
            }
        }
        json!({
            "target": self.target,
            "nodes": nodes,
            "edges": self.edges.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
            "requirements": self.requirements,
            "extraction": status,
        })
    }
}

/// Expand the target's component-bearing citations to a fixpoint, then
/// extract every borrowed component from its provider.
pub fn resolve_transitive(
    target: &PaperDocument,
    fetcher: &dyn WebFetcher,
    gateway: &Gateway,
    opts: ResolveOptions,
) -> Result<CitationGraph, CitationError> {
    let mut graph = CitationGraph::new(target);
    let mut queue: VecDeque<(String, usize)> = VecDeque::from([(target.id.clone(), 0)]);
    while let Some((key, depth)) = queue.pop_front() {
        let Some(doc) = graph.document(&key).cloned() else {
            continue;
        };
        let reqs = discover_dependencies(&doc, gateway);
        let mut children: Vec<String> = reqs.iter().map(|r| r.source_key.clone()).collect();
        for c in fetcher.cited(&key) {
            if !children.contains(&c) {
                children.push(c);
            }
        }
        if !reqs.is_empty() {
            graph.requirements.insert(key.clone(), reqs);
        }
        for child in children {
            if child == key {
                continue;
            }
            graph.edges.insert((child.clone(), key.clone()));
            if graph.nodes.contains_key(&child) {
                continue;
            }
            if depth + 1 > opts.max_depth {
                return Err(CitationError::DepthExceeded(opts.max_depth, child));
            }
            let entry = doc.reference(&child).cloned().unwrap_or_else(|| BibEntry {
                cite_key: child.clone(),
                title: String::new(),
                year: 0,
                external_ids: BTreeMap::new(),
                text: String::new(),
            });
            let state = match fetcher.fetch(&entry) {
                Ok(d) => NodeState::Resolved(Box::new(d)),
                Err(e) => NodeState::Unresolvable(e.to_string()),
            };
            let resolved = matches!(state, NodeState::Resolved(_));
            graph.nodes.insert(child.clone(), state);
            if resolved {
                queue.push_back((child, depth + 1));
            }
        }
    }

    let reqs: Vec<CitationRequirement> = graph.requirements.values().flatten().cloned().collect();
    for r in reqs {
        match graph.nodes.get(&r.source_key) {
            Some(NodeState::Resolved(provider)) => {
                let provider = provider.clone();
                for (name, result) in extract_each(&provider, &r, gateway) {
                    let k = (r.source_key.clone(), normalize_name(&name));
                    match result {
                        Ok(spec) => {
                            graph.extracted.entry(k).or_insert(spec);
                        }
                        Err(e) => {
                            graph.unresolvable.entry(k).or_insert(e.to_string());
                        }
                    }
                }
            }
            Some(NodeState::Unresolvable(err)) => {
                for name in &r.borrowed {
                    graph
                        .unresolvable
                        .entry((r.source_key.clone(), normalize_name(name)))
                        .or_insert(err.clone());
                }
            }
            _ => {}
        }
    }
    Ok(graph)
}

/// True iff no node is pending and every requirement is either extracted
/// or explicitly unresolvable. The report lists what is outstanding.
pub fn is_resolved(graph: &CitationGraph) -> (bool, Vec<String>) {
    let mut report = Vec::new();
    for (k, s) in &graph.nodes {
        if *s == NodeState::Pending {
            report.push(format!("paper `{k}` is pending"));
        }
    }
    for (consumer, reqs) in &graph.requirements {
        for r in reqs {
            for name in &r.borrowed {
                let k = (r.source_key.clone(), normalize_name(name));
                if !graph.extracted.contains_key(&k) && !graph.unresolvable.contains_key(&k) {
                    report.push(format!("`{name}` from `{}` (needed by `{consumer}`) is not extracted", r.source_key));
                }
            }
        }
    }
    (report.is_empty(), report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn target_without_requirements_is_a_single_node() {
        let doc = parse_markdown("# Solo\n\nNothing borrowed.\n\n## References\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = FixtureFetcher::new(dir.path().into(), BTreeMap::new(), BTreeMap::new());
        let g = resolve_transitive(&doc, &f, &Gateway::null(), ResolveOptions::default()).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(is_resolved(&g), (true, Vec::new()));
    }

    #[test]
    fn unfetchable_paper_is_marked() {
        let doc = parse_markdown("# T\n\nWe adopt the widget loss from [gone].\n\n## References\n\n[gone] X. Y. 2020.\n")
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = FixtureFetcher::new(dir.path().into(), BTreeMap::new(), BTreeMap::new());
        let g = resolve_transitive(&doc, &f, &Gateway::null(), ResolveOptions::default()).unwrap();
        assert!(matches!(g.nodes["gone"], NodeState::Unresolvable(_)));
        assert!(is_resolved(&g).0);
    }

    #[test]
    fn pending_node_is_reported() {
        let doc = parse_markdown("# T\n\n## References\n").unwrap();
        let mut g = CitationGraph::new(&doc);
        g.nodes.insert("later".into(), NodeState::Pending);
        let (ok, report) = is_resolved(&g);
        assert!(!ok);
        assert_eq!(report.len(), 1);
    }

    #[test]
    fn cycles_terminate_and_depth_is_bounded() {
        let dir = tempfile::tempdir().unwrap();
        for (k, next) in [("ka", "kb"), ("kb", "kc"), ("kc", "ka")] {
            write(
                dir.path(),
                &format!("{k}.md"),
                &format!("# {k}\n\nWe adopt the {next} block from [{next}].\n\n## Method\n\nThe {k} block is small.\n\n## References\n\n[{next}] X. {next}. 2020.\n"),
            );
        }
        let papers = ["ka", "kb", "kc"].iter().map(|k| (k.to_string(), format!("{k}.md"))).collect();
        let f = FixtureFetcher::new(dir.path().into(), papers, BTreeMap::new());
        let target = f.fetch(&BibEntry { cite_key: "ka".into(), title: String::new(), year: 0, external_ids: BTreeMap::new(), text: String::new() }).unwrap();
        let g = resolve_transitive(&target, &f, &Gateway::null(), ResolveOptions::default()).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert!(is_resolved(&g).0);
        assert_eq!(g.extracted.len(), 3);

        let err = resolve_transitive(&target, &f, &Gateway::null(), ResolveOptions { max_depth: 1 }).unwrap_err();
        assert_eq!(err, CitationError::DepthExceeded(1, "kc".into()));
    }
}
