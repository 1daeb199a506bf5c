use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Derivability, PluginGrammar};
use crate::repo::{
    find_import_cycle, interfaces_from_sources, scan_repository, DanglingImport, FileId, FileInterface,
    FileRecord, RepositoryGraph,
};
use crate::shape::unify_shapes;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    /// Repository-relative path, or the start symbol for whole-plugin faults.
    pub file: String,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort();
        violations.dedup();
        ValidationReport {
            pass: violations.is_empty(),
            violations,
        }
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{} [{}]: {}", v.file, v.rule, v.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn violation(file: &str, rule: &str, detail: impl Into<String>) -> Violation {
    Violation {
        file: file.to_string(),
        rule: rule.to_string(),
        detail: detail.into(),
    }
}

/// Check an acyclic repository graph against the grammar and contracts.
pub fn validate_repository(
    grammar: &PluginGrammar,
    repo: &RepositoryGraph,
    interfaces: &BTreeMap<FileId, FileInterface>,
) -> ValidationReport {
    let files: Vec<FileRecord> = repo.files().cloned().collect();
    let dangling = scan_repository(&files).dangling;
    let (violations, _) = check(grammar, &files, repo.edges(), interfaces, &dangling);
    ValidationReport::from_violations(violations)
}

/// Check raw files, which may contain import cycles. Interfaces are read
/// from the sources.
pub fn validate_files(grammar: &PluginGrammar, files: &[FileRecord]) -> ValidationReport {
    let scan = scan_repository(files);
    let edges = scan.edges();
    let interfaces = interfaces_from_sources(files);
    let (mut violations, illegal) = check(grammar, files, &edges, &interfaces, &scan.dangling);

    let paths: BTreeMap<&FileId, &str> = files.iter().map(|f| (&f.id, f.path.as_str())).collect();
    let mut imports_of: BTreeMap<FileId, BTreeSet<FileId>> = BTreeMap::new();
    for (p, d) in &edges {
        if !illegal.contains(&(p.clone(), d.clone())) {
            imports_of.entry(d.clone()).or_default().insert(p.clone());
        }
    }
    let ids: Vec<FileId> = files.iter().map(|f| f.id.clone()).collect();
    if let Some((culprit, cycle)) = find_import_cycle(&ids, &imports_of) {
        let path: Vec<&str> = cycle.iter().map(|id| paths[id]).collect();
        violations.push(violation(paths[&culprit], "cycle", format!("import cycle {}", path.join(" -> "))));
    }
    ValidationReport::from_violations(violations)
}

/// All rules except acyclicity. Returns the violations and the set of
/// role-illegal edges.
fn check(
    grammar: &PluginGrammar,
    files: &[FileRecord],
    edges: &BTreeSet<(FileId, FileId)>,
    interfaces: &BTreeMap<FileId, FileInterface>,
    dangling: &[DanglingImport],
) -> (Vec<Violation>, BTreeSet<(FileId, FileId)>) {
    let mut out = Vec::new();
    let by_id: BTreeMap<&FileId, &FileRecord> = files.iter().map(|f| (&f.id, f)).collect();
    fn declared<'a>(grammar: &PluginGrammar, f: &'a FileRecord) -> Option<&'a str> {
        f.role.as_deref().filter(|r| grammar.is_role(r))
    }

    for f in files {
        if let Some(role) = &f.role {
            if !grammar.is_role(role) {
                out.push(violation(&f.path, "undeclared-role", format!("role `{role}` is not in the grammar")));
            }
        }
    }

    let mut role_files: Vec<&FileRecord> = files.iter().filter(|f| declared(grammar, f).is_some()).collect();
    role_files.sort_by(|a, b| a.path.cmp(&b.path));
    let count = |fs: &[&FileRecord]| {
        let mut c: BTreeMap<String, usize> = BTreeMap::new();
        for f in fs {
            *c.entry(f.role.clone().unwrap_or_default()).or_insert(0) += 1;
        }
        c
    };
    let engine = Derivability::new(grammar);
    let counts = count(&role_files);
    if !engine.is_derivable(&counts) {
        let blamed = (0..role_files.len()).rev().find(|&i| {
            let mut rest = role_files.clone();
            rest.remove(i);
            engine.is_derivable(&count(&rest))
        });
        let detail = format!(
            "role multiset {{{}}} is not derivable from `{}`",
            counts.iter().map(|(r, n)| format!("{r}: {n}")).collect::<Vec<_>>().join(", "),
            grammar.start
        );
        match blamed {
            Some(i) => out.push(violation(&role_files[i].path, "underivable", detail)),
            None => out.push(violation(&grammar.start, "underivable", detail)),
        }
    }

    for f in &role_files {
        let role = declared(grammar, f).expect("filtered");
        let Some(contract) = grammar.contract(role) else {
            continue;
        };
        let iface = interfaces.get(&f.id);
        for req in &contract.required_exports {
            let Some(found) = iface.and_then(|i| i.export(&req.name)) else {
                out.push(violation(&f.path, "missing-export", format!("{role} must export `{}`", req.name)));
                continue;
            };
            if let (Some(want), Some(got)) = (&req.signature, &found.signature) {
                if let Err(m) = unify_shapes(want, got) {
                    out.push(violation(
                        &f.path,
                        "shape-mismatch",
                        format!("`{}`: declared `{want}`, found `{got}`: {m}", req.name),
                    ));
                }
            }
        }
    }

    let mut illegal = BTreeSet::new();
    for (p, d) in edges {
        let (Some(pf), Some(df)) = (by_id.get(p), by_id.get(d)) else {
            continue;
        };
        let (Some(pr), Some(dr)) = (declared(grammar, pf), declared(grammar, df)) else {
            continue;
        };
        if !grammar.may_import(dr, pr) {
            illegal.insert((p.clone(), d.clone()));
            out.push(violation(
                &df.path,
                "illegal-import",
                format!("{dr} may not import {pr} (`{}`)", pf.path),
            ));
        }
    }

    for (id, iface) in interfaces {
        let Some(importer) = by_id.get(id) else {
            continue;
        };
        for imp in &iface.imports {
            let available = interfaces.get(&imp.provider).map(|p| {
                p.exports
                    .iter()
                    .map(|e| e.name.as_str())
                    .chain(p.imports.iter().map(|i| i.name.as_str()))
                    .any(|n| n == imp.name)
            });
            match available {
                Some(true) => {}
                Some(false) => out.push(violation(
                    &importer.path,
                    "unresolved-import",
                    format!("`{}` is not exported by `{}`", imp.name, imp.provider),
                )),
                None if by_id.contains_key(&imp.provider) => {}
                None => out.push(violation(
                    &importer.path,
                    "unresolved-import",
                    format!("module `{}` is not in the repository", imp.provider),
                )),
            }
        }
    }
    for d in dangling {
        if let Some(f) = by_id.get(&d.importer) {
            out.push(violation(
                &f.path,
                "unresolved-import",
                format!("line {}: module `{}` is not in the repository", d.line, d.module),
            ));
        }
    }
    (out, illegal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repo::{build_repo_dag, scan_role};

    fn files(list: &[(&str, &str)]) -> Vec<FileRecord> {
        list.iter().map(|(p, s)| FileRecord::new(*p, scan_role(s), *s)).collect()
    }

    const CONFIG: &str = "# role: Config\nmethod_specification = object()\n";
    const DM: &str = "# role: DataManager\nfrom .config import method_specification\nclass DM:\n    pass\n";
    const MODEL: &str = "# role: Model\nfrom .data_manager import DM\nclass M:\n    # shape: get_outputs(ray_bundle[R]) -> {rgb:[R,3], depth:[R,1]}\n    def get_outputs(self, ray_bundle):\n        pass\n    def get_loss_dict(self):\n        pass\n";
    const PIPE: &str = "# role: Pipeline\nfrom .model import M\n";

    fn minimal() -> Vec<(&'static str, &'static str)> {
        vec![
            ("p/config.py", CONFIG),
            ("p/data_manager.py", DM),
            ("p/model.py", MODEL),
            ("p/pipeline.py", PIPE),
        ]
    }

    #[test]
    fn minimal_repository_passes() {
        let g = PluginGrammar::default_grammar();
        let fs = files(&minimal());
        let report = validate_files(&g, &fs);
        assert!(report.pass, "{}", report.summary());
        let graph = build_repo_dag(fs.clone()).unwrap();
        assert!(validate_repository(&g, &graph, &interfaces_from_sources(&fs)).pass);
    }

    #[test]
    fn missing_pipeline_is_underivable() {
        let g = PluginGrammar::default_grammar();
        let mut list = minimal();
        list.pop();
        let report = validate_files(&g, &files(&list));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, "underivable");
        assert_eq!(report.violations[0].file, "Plugin");
    }

    #[test]
    fn illegal_back_edge_is_not_also_a_cycle() {
        let g = PluginGrammar::default_grammar();
        let mut list = minimal();
        list[1].1 = "# role: DataManager\nfrom .model import M\nclass DM:\n    pass\n";
        let report = validate_files(&g, &files(&list));
        assert_eq!(report.violations.len(), 1, "{}", report.summary());
        assert_eq!(report.violations[0].rule, "illegal-import");
        assert_eq!(report.violations[0].file, "p/data_manager.py");
    }

    #[test]
    fn report_json_shape() {
        let report = ValidationReport::from_violations(vec![violation("a.py", "cycle", "x")]);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["pass"], false);
        assert_eq!(json["violations"][0]["rule"], "cycle");
    }
}
