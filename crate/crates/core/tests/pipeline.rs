use std::fs;
use std::path::{Path, PathBuf};

use nerfsynth_core::bench::{ladder_evaluate, DEFAULT_TOLERANCE_DB};
use nerfsynth_core::citation::FixtureFetcher;
use nerfsynth_core::critic::{refine, synthetic::SceneConfig, Decision, SyntheticViews, DIAGNOSE_TAG};
use nerfsynth_core::grammar::validate_files;
use nerfsynth_core::llm::{Gateway, MockBackend};
use nerfsynth_core::paper::{parse_markdown, KnowledgeBase};
use nerfsynth_core::synth::write_artifacts;
use nerfsynth_core::{synthesize, PluginGrammar, RunConfig, StubSandbox, SynthOutput};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/minimal")
}

fn run(gateway: &Gateway) -> SynthOutput {
    let root = fixture();
    let doc = parse_markdown(&fs::read_to_string(root.join("paper.md")).unwrap()).unwrap();
    let fetcher = FixtureFetcher::load(&root.join("graph.json")).unwrap();
    let grammar = PluginGrammar::default_grammar();
    let cfg = RunConfig::default().synth(None);
    synthesize(&doc, &KnowledgeBase::empty(), &grammar, &fetcher, gateway, &StubSandbox::new(), &cfg)
        .unwrap_or_else(|f| panic!("{f}\n{}", f.log.to_jsonl()))
}

fn mock() -> MockBackend {
    MockBackend::from_file(&fixture().join("script.json")).unwrap()
}

#[test]
fn minimal_paper_reaches_trainable() {
    let out = run(&Gateway::mock(mock()));
    let report = validate_files(&PluginGrammar::default_grammar(), &out.repo.records());
    assert!(report.pass, "{}", report.summary());
    let ladder = ladder_evaluate(&out.report, 99.0, DEFAULT_TOLERANCE_DB).unwrap();
    assert!(ladder.trainable, "{:?}", out.report);
    assert_eq!(out.report.steps_completed, 3000);
    assert_eq!(out.log.terminal(), Some("success"));
}

#[test]
fn replayed_run_is_byte_identical() {
    let cache = tempfile::tempdir().unwrap();
    let first = run(&Gateway::mock(mock()).recording(cache.path()));
    let second = run(&Gateway::replay(cache.path()));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_artifacts(a.path(), &first).unwrap();
    write_artifacts(b.path(), &second).unwrap();
    for name in ["repo_graph.json", "interfaces.json", "plan.json", "smoke_report.json", "events.jsonl"] {
        assert_eq!(
            fs::read_to_string(a.path().join(name)).unwrap(),
            fs::read_to_string(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
    assert_eq!(first.repo, second.repo);
}

fn slower(lr: f64) -> String {
    serde_json::json!({"diagnoses": [{
        "class": "blur", "role": "Config", "rationale": "underfit",
        "patch": {"target": "tinyfield/config.py", "kind": "hyperparameter-change", "key": "learning_rate", "value": lr}
    }]})
    .to_string()
}

#[test]
fn never_improving_refinement_reverts_everything() {
    let synth = run(&Gateway::mock(mock()));
    let mut critic = MockBackend::new();
    for i in 0..5 {
        critic = critic.push(DIAGNOSE_TAG, slower(0.001 / (i + 1) as f64));
    }
    let work = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default().refine(work.path(), None);
    let views = SyntheticViews(SceneConfig {
        floater: true,
        ..SceneConfig::default()
    });
    let out = refine(&synth.repo, &views, 40.0, &StubSandbox::new(), &Gateway::mock(critic.clone()), &cfg).unwrap();
    assert_eq!(out.history.len(), 5);
    assert_eq!(out.history.last().unwrap().decision, Decision::MaxIterations);
    for it in &out.history {
        assert_eq!(it.patches.len(), 1);
        assert!(it.patches[0].reverted, "{:?}", it.patches[0]);
        assert_eq!(it.psnr_after, it.psnr_before);
    }
    assert_eq!(out.repo, synth.repo);
    assert_eq!(critic.remaining(DIAGNOSE_TAG), 0);
}
