//! The repository `C = (F, G)`: files plus their acyclic import DAG.
//!
//! Edges are derived textually from module-level `import` / `from ... import`
//! statements resolved against repository module paths. External packages
//! create no edges. An edge `(from, to)` means `to` depends on `from`.

mod python;
mod tree;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shape::ShapeSignature;

pub use python::{module_of, scan_exports, scan_imports, scan_role, top_level_raise, ImportStmt};
pub use tree::Repository;

/// Dotted module path for Python files, the raw path otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileId(pub String);

impl FileId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for FileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FileId {
    fn from(s: &str) -> Self {
        FileId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub id: FileId,
    pub path: String,
    pub role: Option<String>,
    #[serde(skip)]
    pub source: String,
}

impl FileRecord {
    pub fn new(path: impl Into<String>, role: Option<String>, source: impl Into<String>) -> Self {
        let path = path.into();
        let id = FileId(module_of(&path).unwrap_or_else(|| path.clone()));
        FileRecord {
            id,
            path,
            role,
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepoError {
    #[error("import cycle: {}", fmt_cycle(.0))]
    CycleDetected(Vec<FileId>),
    #[error("unknown node `{0}`")]
    UnknownNode(FileId),
    #[error("duplicate file id `{0}`")]
    DuplicateFile(FileId),
    #[error("malformed graph: {0}")]
    Malformed(String),
}

fn fmt_cycle(c: &[FileId]) -> String {
    c.iter().map(FileId::as_str).collect::<Vec<_>>().join(" -> ")
}

/// One resolved import statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedImport {
    pub importer: FileId,
    pub provider: FileId,
    /// Imported names; empty for `import x` and submodule imports.
    pub names: Vec<String>,
    pub line: usize,
}

/// An import that targets the repository's own packages but matches no file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingImport {
    pub importer: FileId,
    pub module: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ImportScan {
    pub imports: Vec<ResolvedImport>,
    pub dangling: Vec<DanglingImport>,
}

impl ImportScan {
    /// Dependency edges `(provider, importer)`, including self-edges.
    pub fn edges(&self) -> BTreeSet<(FileId, FileId)> {
        self.imports
            .iter()
            .map(|i| (i.provider.clone(), i.importer.clone()))
            .collect()
    }
}

/// Resolve every module-level import of `files` against the repository.
pub fn scan_repository(files: &[FileRecord]) -> ImportScan {
    let modules: BTreeSet<&str> = files.iter().map(|f| f.id.as_str()).collect();
    let roots: BTreeSet<&str> = modules.iter().filter_map(|m| m.split('.').next()).collect();
    let owned_by_repo = |m: &str| m.split('.').next().is_some_and(|r| roots.contains(r));
    let mut scan = ImportScan::default();
    for f in files.iter().filter(|f| f.path.ends_with(".py")) {
        for stmt in scan_imports(&f.path, &f.source) {
            let resolved = |provider: &str, names: Vec<String>| ResolvedImport {
                importer: f.id.clone(),
                provider: FileId(provider.to_string()),
                names,
                line: stmt.line,
            };
            if stmt.from_form {
                if modules.contains(stmt.module.as_str()) {
                    let mut plain = Vec::new();
                    for n in &stmt.names {
                        let sub = format!("{}.{}", stmt.module, n);
                        if modules.contains(sub.as_str()) {
                            scan.imports.push(resolved(&sub, Vec::new()));
                        } else {
                            plain.push(n.clone());
                        }
                    }
                    if !plain.is_empty() || stmt.names.is_empty() {
                        scan.imports.push(resolved(&stmt.module, plain));
                    }
                    continue;
                }
                // `from pkg import sub` where pkg has no __init__ in the tree.
                let subs: Vec<String> = stmt
                    .names
                    .iter()
                    .map(|n| format!("{}.{}", stmt.module, n))
                    .filter(|s| modules.contains(s.as_str()))
                    .collect();
                if !subs.is_empty() && subs.len() == stmt.names.len() {
                    for s in subs {
                        scan.imports.push(resolved(&s, Vec::new()));
                    }
                    continue;
                }
            } else if modules.contains(stmt.module.as_str()) {
                scan.imports.push(resolved(&stmt.module, Vec::new()));
                continue;
            }
            if stmt.relative || owned_by_repo(&stmt.module) {
                scan.dangling.push(DanglingImport {
                    importer: f.id.clone(),
                    module: stmt.module.clone(),
                    line: stmt.line,
                });
            }
        }
    }
    scan
}

/// Deterministic Kahn sort. Ready nodes are released in ascending `key`
/// order. On failure returns one cycle as an ordered node path.
pub fn topo_sort<K, F, O>(nodes: &[K], edges: &BTreeSet<(K, K)>, key: F) -> Result<Vec<K>, Vec<K>>
where
    K: Ord + Clone,
    F: Fn(&K) -> O,
    O: Ord,
{
    let mut indeg: BTreeMap<&K, usize> = nodes.iter().map(|n| (n, 0)).collect();
    let mut out_adj: BTreeMap<&K, Vec<&K>> = BTreeMap::new();
    for (a, b) in edges {
        *indeg.entry(b).or_insert(0) += 1;
        out_adj.entry(a).or_default().push(b);
    }
    let mut ready: BTreeMap<(O, &K), ()> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| ((key(n), *n), ()))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(((_, n), ())) = ready.pop_first() {
        order.push(n.clone());
        for m in out_adj.get(n).into_iter().flatten() {
            let d = indeg.get_mut(m).expect("edge endpoint registered");
            *d -= 1;
            if *d == 0 {
                ready.insert((key(m), *m), ());
            }
        }
    }
    if order.len() == indeg.len() {
        return Ok(order);
    }
    let remaining: BTreeSet<&K> = indeg.iter().filter(|(_, d)| **d > 0).map(|(n, _)| *n).collect();
    Err(cycle_within(&remaining, &out_adj))
}

fn cycle_within<K: Ord + Clone>(remaining: &BTreeSet<&K>, out_adj: &BTreeMap<&K, Vec<&K>>) -> Vec<K> {
    // Every remaining node has a remaining predecessor, so walking
    // predecessors inside the remaining set must revisit a node.
    let mut preds: BTreeMap<&K, &K> = BTreeMap::new();
    for (a, succ) in out_adj {
        if remaining.contains(a) {
            for b in succ {
                if remaining.contains(b) {
                    preds.entry(*b).or_insert(*a);
                }
            }
        }
    }
    let Some(start) = remaining.iter().next() else {
        return Vec::new();
    };
    let mut seen: BTreeMap<&K, usize> = BTreeMap::new();
    let mut path: Vec<&K> = Vec::new();
    let mut cur: &K = start;
    while !seen.contains_key(cur) {
        seen.insert(cur, path.len());
        path.push(cur);
        cur = preds[cur];
    }
    let mut cycle: Vec<K> = path[seen[cur]..].iter().rev().map(|k| (*k).clone()).collect();
    cycle.insert(0, cur.clone());
    cycle
}

/// Find the first import cycle by depth-first search along import
/// direction (importer -> provider), visiting roots and neighbours in
/// ascending order. The cycle is attributed to the file whose import
/// closes it. Returns `(culprit, cycle path)`.
pub fn find_import_cycle<K: Ord + Clone>(
    nodes: &[K],
    imports_of: &BTreeMap<K, BTreeSet<K>>,
) -> Option<(K, Vec<K>)> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<K, Mark> = BTreeMap::new();
    let mut sorted: Vec<K> = nodes.to_vec();
    sorted.sort();
    for root in sorted {
        if marks.contains_key(&root) {
            continue;
        }
        // Explicit stack of (node, next-neighbour index).
        let mut stack: Vec<(K, Vec<K>, usize)> = Vec::new();
        let succ = |n: &K| imports_of.get(n).map(|s| s.iter().cloned().collect()).unwrap_or_default();
        marks.insert(root.clone(), Mark::Open);
        stack.push((root.clone(), succ(&root), 0));
        while let Some((node, nbrs, idx)) = stack.last_mut() {
            if *idx == nbrs.len() {
                marks.insert(node.clone(), Mark::Done);
                stack.pop();
                continue;
            }
            let next = nbrs[*idx].clone();
            *idx += 1;
            match marks.get(&next) {
                Some(Mark::Open) => {
                    let culprit = node.clone();
                    let pos = stack.iter().position(|(n, _, _)| *n == next).expect("open node on stack");
                    let mut cycle: Vec<K> = stack[pos..].iter().map(|(n, _, _)| n.clone()).collect();
                    cycle.push(next);
                    return Some((culprit, cycle));
                }
                Some(Mark::Done) => {}
                None => {
                    marks.insert(next.clone(), Mark::Open);
                    let s = succ(&next);
                    stack.push((next, s, 0));
                }
            }
        }
    }
    None
}

/// Import/dataflow DAG over repository files. Acyclic by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepositoryGraph {
    files: BTreeMap<FileId, FileRecord>,
    edges: BTreeSet<(FileId, FileId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNodeJson {
    pub id: FileId,
    pub path: String,
    pub role: Option<String>,
}

/// The `repo_graph.json` layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoGraphJson {
    pub nodes: Vec<GraphNodeJson>,
    pub edges: Vec<[FileId; 2]>,
}

/// Build the repository DAG from import statements.
pub fn build_repo_dag(files: Vec<FileRecord>) -> Result<RepositoryGraph, RepoError> {
    let edges = scan_repository(&files).edges();
    RepositoryGraph::from_parts(files, edges)
}

impl RepositoryGraph {
    pub fn from_parts(
        files: Vec<FileRecord>,
        edges: BTreeSet<(FileId, FileId)>,
    ) -> Result<Self, RepoError> {
        let mut map = BTreeMap::new();
        for f in files {
            if let Some(prev) = map.insert(f.id.clone(), f) {
                return Err(RepoError::DuplicateFile(prev.id));
            }
        }
        for (a, b) in &edges {
            for end in [a, b] {
                if !map.contains_key(end) {
                    return Err(RepoError::UnknownNode(end.clone()));
                }
            }
            if a == b {
                return Err(RepoError::CycleDetected(vec![a.clone(), a.clone()]));
            }
        }
        let graph = RepositoryGraph { files: map, edges };
        graph.sorted()?;
        Ok(graph)
    }

    fn sorted(&self) -> Result<Vec<FileId>, RepoError> {
        let nodes: Vec<FileId> = self.files.keys().cloned().collect();
        topo_sort(&nodes, &self.edges, |id| self.files[id].path.clone()).map_err(RepoError::CycleDetected)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileRecord> {
        self.files.values()
    }

    pub fn file(&self, id: &FileId) -> Option<&FileRecord> {
        self.files.get(id)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn edges(&self) -> &BTreeSet<(FileId, FileId)> {
        &self.edges
    }

    /// Files in dependency order; ties broken by lexicographic path.
    pub fn topological_order(&self) -> Vec<FileId> {
        self.sorted().expect("acyclic by construction")
    }

    /// True iff a non-empty path `a -> ... -> b` exists.
    pub fn reachability(&self, a: &FileId, b: &FileId) -> Result<bool, RepoError> {
        for n in [a, b] {
            if !self.files.contains_key(n) {
                return Err(RepoError::UnknownNode(n.clone()));
            }
        }
        Ok(self.descendants(a).contains(b))
    }

    fn successors<'a>(&'a self, n: &'a FileId) -> impl Iterator<Item = &'a FileId> + 'a {
        self.edges
            .range((n.clone(), FileId(String::new()))..)
            .take_while(move |(a, _)| a == n)
            .map(|(_, b)| b)
    }

    pub fn descendants(&self, a: &FileId) -> BTreeSet<FileId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&FileId> = self.successors(a).collect();
        while let Some(n) = queue.pop_front() {
            if seen.insert(n.clone()) {
                queue.extend(self.successors(n));
            }
        }
        seen
    }

    /// Every file that `b` transitively depends on.
    pub fn ancestors(&self, b: &FileId) -> BTreeSet<FileId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([b.clone()]);
        while let Some(n) = queue.pop_front() {
            for (p, c) in &self.edges {
                if *c == n && seen.insert(p.clone()) {
                    queue.push_back(p.clone());
                }
            }
        }
        seen
    }

    /// Add plan-level dataflow edges into files that have no import edges of
    /// their own.
    pub fn with_dataflow_edges(
        &self,
        extra: impl IntoIterator<Item = (FileId, FileId)>,
    ) -> Result<Self, RepoError> {
        let with_imports: BTreeSet<&FileId> = self.edges.iter().map(|(_, b)| b).collect();
        let mut edges = self.edges.clone();
        for (a, b) in extra {
            if self.files.contains_key(&a) && self.files.contains_key(&b) && !with_imports.contains(&b) {
                edges.insert((a, b));
            }
        }
        RepositoryGraph::from_parts(self.files.values().cloned().collect(), edges)
    }

    pub fn to_json(&self) -> RepoGraphJson {
        RepoGraphJson {
            nodes: self
                .files
                .values()
                .map(|f| GraphNodeJson {
                    id: f.id.clone(),
                    path: f.path.clone(),
                    role: f.role.clone(),
                })
                .collect(),
            edges: self.edges.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
        }
    }

    /// Rebuild from `repo_graph.json` plus sources looked up by path.
    pub fn from_json(json: &RepoGraphJson, sources: &Repository) -> Result<Self, RepoError> {
        let files = json
            .nodes
            .iter()
            .map(|n| {
                let mut rec = FileRecord::new(
                    n.path.clone(),
                    n.role.clone(),
                    sources.get(&n.path).unwrap_or_default(),
                );
                if rec.id != n.id {
                    return Err(RepoError::Malformed(format!("node id `{}` does not match path `{}`", n.id, n.path)));
                }
                rec.id = n.id.clone();
                Ok(rec)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edges = json.edges.iter().map(|[a, b]| (a.clone(), b.clone())).collect();
        RepositoryGraph::from_parts(files, edges)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Export {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<ShapeSignature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportedName {
    pub name: String,
    pub provider: FileId,
}

/// Public surface of one file: what it exports and what it pulls in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileInterface {
    pub file: FileId,
    pub exports: Vec<Export>,
    pub imports: Vec<ImportedName>,
}

impl FileInterface {
    pub fn export(&self, name: &str) -> Option<&Export> {
        self.exports.iter().find(|e| e.name == name)
    }
}

/// Extract interfaces from source text for every file in `files`.
pub fn interfaces_from_sources(files: &[FileRecord]) -> BTreeMap<FileId, FileInterface> {
    let scan = scan_repository(files);
    files
        .iter()
        .map(|f| {
            let exports = scan_exports(&f.source)
                .into_iter()
                .map(|(name, signature)| Export { name, signature })
                .collect();
            let imports = scan
                .imports
                .iter()
                .filter(|i| i.importer == f.id)
                .flat_map(|i| {
                    i.names.iter().map(|n| ImportedName {
                        name: n.clone(),
                        provider: i.provider.clone(),
                    })
                })
                .collect();
            (
                f.id.clone(),
                FileInterface {
                    file: f.id.clone(),
                    exports,
                    imports,
                },
            )
        })
        .collect()
}
