use std::path::{Path, PathBuf};

use nerfsynth_core::grammar::{load_grammar, validate_files, PluginGrammar};
use nerfsynth_core::repo::Repository;
use serde::Deserialize;

#[derive(Deserialize)]
struct Mutation {
    name: String,
    file: String,
    rule: String,
    old: String,
    new: String,
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/grammar")
}

fn gold() -> Repository {
    Repository::read_dir(&root().join("gold")).unwrap()
}

fn mutations() -> Vec<Mutation> {
    serde_json::from_str(&std::fs::read_to_string(root().join("mutations.json")).unwrap()).unwrap()
}

#[test]
fn gold_skeleton_validates() {
    let report = validate_files(&PluginGrammar::default_grammar(), &gold().records());
    assert!(report.pass, "{}", report.summary());
}

#[test]
fn each_mutation_is_one_violation_in_its_file() {
    let grammar = PluginGrammar::default_grammar();
    let all = mutations();
    assert_eq!(all.len(), 10);
    for m in all {
        let mut repo = gold();
        let src = repo.get(&m.file).unwrap_or_else(|| panic!("{}: no {}", m.name, m.file)).to_string();
        assert_eq!(src.matches(&m.old).count(), 1, "{}: anchor must be unique", m.name);
        repo.insert(&m.file, src.replace(&m.old, &m.new));
        let report = validate_files(&grammar, &repo.records());
        assert_eq!(report.violations.len(), 1, "{}:\n{}", m.name, report.summary());
        let v = &report.violations[0];
        assert_eq!((v.file.as_str(), v.rule.as_str()), (m.file.as_str(), m.rule.as_str()), "{}", m.name);
    }
}

#[test]
fn shipped_grammar_file_matches_builtin() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("grammar/default.cfg")).unwrap();
    assert_eq!(load_grammar(&text).unwrap(), PluginGrammar::default_grammar());
}
