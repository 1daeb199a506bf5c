use std::fs;
use std::path::{Path, PathBuf};

use nerfsynth_core::citation::{is_resolved, normalize_name, resolve_transitive, FixtureFetcher, ResolveOptions};
use nerfsynth_core::llm::Gateway;
use nerfsynth_core::paper::{parse_markdown, PaperDocument};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn load(dir: &str, key: &str) -> (PaperDocument, FixtureFetcher) {
    let root = fixture(dir);
    let doc = parse_markdown(&fs::read_to_string(root.join(format!("{key}.md"))).unwrap()).unwrap();
    (doc, FixtureFetcher::load(&root.join("graph.json")).unwrap())
}

#[test]
fn kplanes_closure() {
    let (doc, fetcher) = load("kplanes", "kplanes");
    let g = resolve_transitive(&doc, &fetcher, &Gateway::null(), ResolveOptions::default()).unwrap();
    let direct = &g.requirements["kplanes"];
    assert_eq!(direct.len(), 7, "{direct:#?}");
    let papers: Vec<&String> = g.nodes.keys().filter(|k| **k != g.target).collect();
    assert_eq!(papers.len(), 12, "{papers:?}");
    let (ok, outstanding) = is_resolved(&g);
    assert!(ok, "{outstanding:?}");
    assert!(g.unresolvable.is_empty(), "{:?}", g.unresolvable);
    let borrowed: std::collections::BTreeSet<(String, String)> = g
        .requirements
        .values()
        .flatten()
        .flat_map(|r| r.borrowed.iter().map(|b| (r.source_key.clone(), normalize_name(b))))
        .collect();
    assert_eq!(g.extracted.keys().cloned().collect::<std::collections::BTreeSet<_>>(), borrowed);
}

#[test]
fn cycles_terminate() {
    let (doc, fetcher) = load("cyclic", "alpha");
    let g = resolve_transitive(&doc, &fetcher, &Gateway::null(), ResolveOptions::default()).unwrap();
    assert!(g.nodes.len() <= fetcher.universe().len());
    assert_eq!(g.nodes.len(), 3);
    assert!(g.edges.contains(&("alpha".to_string(), "gamma".to_string())));
    assert!(is_resolved(&g).0);
}

#[test]
fn shallow_depth_is_reported() {
    let (doc, fetcher) = load("kplanes", "kplanes");
    assert!(resolve_transitive(&doc, &fetcher, &Gateway::null(), ResolveOptions { max_depth: 1 }).is_err());
}
