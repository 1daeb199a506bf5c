//! One line per acceptance criterion. Exits nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nerfsynth_core::bench::{
    llm_score, load_manifest, novelty_coverage, run_bench, FixtureJudgments, ItemStatus, NoveltyItem, RunOutput,
    LEVELS,
};
use nerfsynth_core::citation::{is_resolved, resolve_transitive, FixtureFetcher, ResolveOptions};
use nerfsynth_core::critic::synthetic::{corner_scene, SceneConfig};
use nerfsynth_core::critic::{
    compute_error_fields, cross_view_consensus, extract_rois, refine, ConsensusConfig, Decision, Image,
    MorphConfig, SyntheticViews, WindowConfig, DIAGNOSE_TAG,
};
use nerfsynth_core::grammar::validate_files;
use nerfsynth_core::llm::{Gateway, MockBackend};
use nerfsynth_core::paper::{parse_markdown, KnowledgeBase};
use nerfsynth_core::repo::{build_repo_dag, FileRecord, RepoError};
use nerfsynth_core::{synthesize, PluginGrammar, Repository, RunConfig, SmokeReport, StubSandbox, SynthOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t > limit {
        return Err(format!("took {t:.2?}, limit {limit:?}"));
    }
    Ok(t)
}

// 1. Repository graph against a transitive-closure oracle.

fn random_graph(rng: &mut ChaCha8Rng, acyclic: bool) -> (usize, Vec<(usize, usize)>) {
    let n = rng.random_range(1..=8);
    let rank: Vec<usize> = {
        let mut r: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            r.swap(i, rng.random_range(0..=i));
        }
        r
    };
    let p = rng.random_range(0.1..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && (!acyclic || rank[a] < rank[b]) && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    (n, edges)
}

fn graph_files(n: usize, edges: &[(usize, usize)]) -> Vec<FileRecord> {
    (0..n)
        .map(|k| {
            let mut src = String::new();
            for (a, _) in edges.iter().filter(|(_, b)| *b == k) {
                src.push_str(&format!("from g.m{a} import X{a}\n"));
            }
            src.push_str(&format!("X{k} = 1\n"));
            FileRecord::new(format!("g/m{k}.py"), None, src)
        })
        .collect()
}

fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
            }
        }
    }
    r
}

/// Lexicographically least topological order by file path.
fn least_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let path = |k: usize| format!("g/m{k}.py");
    let mut placed = vec![false; n];
    let mut out = Vec::new();
    while out.len() < n {
        let next = (0..n)
            .filter(|&k| !placed[k] && edges.iter().all(|&(a, b)| b != k || placed[a]))
            .min_by_key(|&k| path(k))
            .expect("acyclic");
        placed[next] = true;
        out.push(next);
    }
    out
}

fn graph_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let index = |path: &str| -> usize { path.trim_start_matches("g/m").trim_end_matches(".py").parse().unwrap() };
    let (mut dags, mut cyclic) = (0, 0);
    for trial in 0..1250 {
        let (n, edges) = random_graph(&mut rng, trial < 1000);
        let reach = closure(n, &edges);
        let has_cycle = (0..n).any(|i| reach[i][i]);
        let files = graph_files(n, &edges);
        let by_id: BTreeMap<_, usize> = files.iter().map(|f| (f.id.clone(), index(&f.path))).collect();
        match build_repo_dag(files) {
            Ok(g) => {
                ensure!(!has_cycle, "trial {trial}: cycle not detected in {edges:?}");
                let order: Vec<usize> = g.topological_order().iter().map(|id| index(g.file(id).unwrap().path.as_str())).collect();
                ensure!(order == least_order(n, &edges), "trial {trial}: order {order:?} for {edges:?}");
                let ids: BTreeMap<usize, _> = g.files().map(|f| (index(&f.path), f.id.clone())).collect();
                for a in 0..n {
                    for b in 0..n {
                        let got = g.reachability(&ids[&a], &ids[&b]).unwrap();
                        ensure!(got == reach[a][b], "trial {trial}: reach({a},{b}) = {got} in {edges:?}");
                    }
                }
                dags += 1;
            }
            Err(RepoError::CycleDetected(c)) => {
                ensure!(has_cycle, "trial {trial}: false cycle {c:?} in {edges:?}");
                let c: Vec<usize> = c.iter().map(|id| by_id[id]).collect();
                let mut walk = c.clone();
                if walk.first() != walk.last() {
                    walk.push(walk[0]);
                }
                ensure!(
                    walk.len() >= 3 && walk.windows(2).all(|w| edges.contains(&(w[0], w[1]))),
                    "trial {trial}: reported cycle {c:?} is not a cycle of {edges:?}"
                );
                cyclic += 1;
            }
            Err(e) => return Err(format!("trial {trial}: {e}")),
        }
    }
    ensure!(dags >= 1000, "only {dags} DAGs");
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("{dags} DAGs and {cyclic} cyclic graphs agree with the oracle in {t:.2?}"))
}

// 2. Citation closure.

fn load_paper(dir: &Path, key: &str) -> nerfsynth_core::PaperDocument {
    parse_markdown(&fs::read_to_string(dir.join(format!("{key}.md"))).unwrap()).unwrap()
}

fn citation_closure() -> Outcome {
    let dir = fixtures().join("kplanes");
    let fetcher = FixtureFetcher::load(&dir.join("graph.json")).map_err(|e| e.to_string())?;
    let g = resolve_transitive(&load_paper(&dir, "kplanes"), &fetcher, &Gateway::null(), ResolveOptions::default())
        .map_err(|e| e.to_string())?;
    let direct = g.requirements.get("kplanes").map_or(0, Vec::len);
    let papers = g.nodes.keys().filter(|k| **k != g.target).count();
    let (ok, outstanding) = is_resolved(&g);
    ensure!(direct == 7, "{direct} direct requirements");
    ensure!(papers == 12, "{papers} papers in the closure");
    ensure!(ok, "unresolved: {outstanding:?}");

    let dir = fixtures().join("cyclic");
    let fetcher = FixtureFetcher::load(&dir.join("graph.json")).map_err(|e| e.to_string())?;
    let c = resolve_transitive(&load_paper(&dir, "alpha"), &fetcher, &Gateway::null(), ResolveOptions::default())
        .map_err(|e| e.to_string())?;
    let universe = fetcher.universe().len();
    ensure!(c.nodes.len() <= universe, "cyclic closure has {} nodes, universe {universe}", c.nodes.len());
    Ok(format!(
        "7 direct, 12 papers, resolved; cyclic fixture stops at {}/{universe} nodes",
        c.nodes.len()
    ))
}

// 3. Grammar validation of the gold skeleton and its mutations.

#[derive(Deserialize)]
struct Mutation {
    name: String,
    file: String,
    old: String,
    new: String,
}

fn grammar_mutations() -> Outcome {
    let root = fixtures().join("grammar");
    let grammar = PluginGrammar::default_grammar();
    let gold = Repository::read_dir(&root.join("gold")).map_err(|e| e.to_string())?;
    let report = validate_files(&grammar, &gold.records());
    ensure!(report.pass, "gold skeleton fails:\n{}", report.summary());
    let mutations: Vec<Mutation> =
        serde_json::from_str(&fs::read_to_string(root.join("mutations.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(mutations.len() == 10, "{} mutations", mutations.len());
    for m in &mutations {
        let mut repo = gold.clone();
        let src = repo.get(&m.file).ok_or(format!("{}: no {}", m.name, m.file))?.to_string();
        repo.insert(&m.file, src.replacen(&m.old, &m.new, 1));
        let r = validate_files(&grammar, &repo.records());
        ensure!(
            r.violations.len() == 1 && r.violations[0].file == m.file,
            "{}: expected one violation in {}, got\n{}",
            m.name,
            m.file,
            r.summary()
        );
    }
    Ok("gold passes; 10/10 mutations give exactly one violation in the mutated file".into())
}

// 4. Windowed image metrics against a brute-force oracle.

fn oracle_fields(a: &Image, b: &Image, cfg: &WindowConfig) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (a.width, a.height);
    let n = cfg.ssim_size as i64;
    let r = n / 2;
    let mut weights = vec![vec![0.0; n as usize]; n as usize];
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * cfg.ssim_sigma * cfg.ssim_sigma)).exp();
            weights[(dy + r) as usize][(dx + r) as usize] = v;
            total += v;
        }
    }
    let (c1, c2) = ((cfg.k1 * cfg.range).powi(2), (cfg.k2 * cfg.range).powi(2));
    let local = |cx: i64, cy: i64| -> Option<f64> {
        if cx - r < 0 || cy - r < 0 || cx + r >= w as i64 || cy + r >= h as i64 {
            return None;
        }
        let mut s = 0.0;
        for ch in 0..3 {
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = weights[(dy + r) as usize][(dx + r) as usize] / total;
                    mx += wt * a.get((cx + dx) as usize, (cy + dy) as usize)[ch];
                    my += wt * b.get((cx + dx) as usize, (cy + dy) as usize)[ch];
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = weights[(dy + r) as usize][(dx + r) as usize] / total;
                    let x = a.get((cx + dx) as usize, (cy + dy) as usize)[ch] - mx;
                    let y = b.get((cx + dx) as usize, (cy + dy) as usize)[ch] - my;
                    vx += wt * x * x;
                    vy += wt * y * y;
                    cov += wt * x * y;
                }
            }
            s += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        Some(s / 3.0)
    };
    let (mut psnr, mut ssim) = (Vec::new(), Vec::new());
    let k = cfg.psnr_size;
    let mut y0 = 0;
    while y0 + k <= h {
        let mut x0 = 0;
        while x0 + k <= w {
            let mut se = 0.0;
            let mut vals = Vec::new();
            for y in y0..y0 + k {
                for x in x0..x0 + k {
                    for ch in 0..3 {
                        se += (a.get(x, y)[ch] - b.get(x, y)[ch]).powi(2);
                    }
                    vals.extend(local(x as i64, y as i64));
                }
            }
            let mse = se / (3 * k * k) as f64;
            psnr.push(if mse == 0.0 { cfg.ceiling } else { (10.0 * (cfg.range.powi(2) / mse).log10()).min(cfg.ceiling) });
            ssim.push(if vals.is_empty() { 1.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 });
            x0 += cfg.stride;
        }
        y0 += cfg.stride;
    }
    (psnr, ssim)
}

fn image_metrics() -> Outcome {
    let cfg = WindowConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for pair in 0..50 {
        let base: Vec<[f64; 3]> = (0..64 * 64).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let noise: f64 = rng.random_range(0.01..0.3);
        let jitter: Vec<[f64; 3]> = (0..64 * 64).map(|_| [0; 3].map(|_| noise * (rng.random::<f64>() - 0.5))).collect();
        let a = Image::from_fn(64, 64, |x, y| base[y * 64 + x]);
        let b = Image::from_fn(64, 64, |x, y| {
            let (p, d) = (base[y * 64 + x], jitter[y * 64 + x]);
            [0, 1, 2].map(|c| (p[c] + d[c]).clamp(0.0, 1.0))
        });
        let f = compute_error_fields(&b, &a, &cfg).map_err(|e| e.to_string())?;
        let (psnr, ssim) = oracle_fields(&b, &a, &cfg);
        ensure!(psnr.len() == f.psnr.values.len(), "pair {pair}: grid size");
        for (x, y) in f.psnr.values.iter().zip(&psnr).chain(f.ssim.values.iter().zip(&ssim)) {
            worst = worst.max((x - y).abs());
        }
        ensure!(worst <= 1e-6, "pair {pair}: deviation {worst:e}");
    }

    let img = Image::from_fn(64, 64, |x, y| [x as f64 / 64.0, y as f64 / 64.0, 0.5]);
    let same = compute_error_fields(&img, &img, &cfg).map_err(|e| e.to_string())?;
    let rois = extract_rois(&same, 64, 64, &MorphConfig::default());
    ensure!(rois.is_empty(), "{} ROIs on identical images", rois.len());

    let gray = compute_error_fields(&Image::new(64, 64, [0.5; 3]), &Image::new(64, 64, [0.0; 3]), &cfg)
        .map_err(|e| e.to_string())?;
    let off = gray.psnr.values.iter().map(|v| (v - 6.02).abs()).fold(0.0, f64::max);
    ensure!(off <= 0.01, "gray vs black off by {off}");
    Ok(format!("50 pairs within {worst:.1e}; identical images give no ROIs; gray vs black within {off:.4} dB of 6.02"))
}

// 5. Cross-view consensus.

fn consensus() -> Outcome {
    let start = Instant::now();
    let cfg = ConsensusConfig::default();
    let clean = corner_scene(&SceneConfig::default());
    let c = cross_view_consensus(&clean.views, None, &cfg).map_err(|e| e.to_string())?;
    ensure!(c.total_flagged() == 0, "{} flags on the consistent scene", c.total_flagged());

    let (w, h) = (clean.views[0].depth.width, clean.views[0].depth.height);
    let mut masks = vec![vec![false; w * h]; clean.views.len()];
    for y in 8..40 {
        for x in 8..56 {
            masks[0][y * w + x] = true;
        }
    }
    let c = cross_view_consensus(&clean.views, Some(&masks), &cfg).map_err(|e| e.to_string())?;
    ensure!(c.total_flagged() == 0, "{} flags for surface-consistent errors", c.total_flagged());

    let s = corner_scene(&SceneConfig {
        floater: true,
        ..SceneConfig::default()
    });
    let c = cross_view_consensus(&s.views, None, &cfg).map_err(|e| e.to_string())?;
    let got = &c.masks[0];
    let tp = got.iter().zip(&s.floater_mask).filter(|(g, t)| **g && **t).count() as f64;
    let flagged: usize = c.masks.iter().map(|m| m.iter().filter(|b| **b).count()).sum();
    let precision = tp / flagged.max(1) as f64;
    let recall = tp / s.floater_mask.iter().filter(|t| **t).count() as f64;
    ensure!(precision >= 0.9 && recall >= 0.9, "precision {precision:.3} recall {recall:.3}");
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!("0 flags when consistent; floater precision {precision:.3} recall {recall:.3} in {t:.2?}"))
}

// 6. Bench metrics.

fn trained() -> SmokeReport {
    SmokeReport {
        imports_resolve: true,
        registered: true,
        train_started: true,
        steps_completed: 3000,
        loss_first: Some(0.3),
        loss_last: Some(0.02),
        psnr_eval: Some(25.0),
        ..SmokeReport::default()
    }
}

fn random_items(rng: &mut ChaCha8Rng) -> Vec<NoveltyItem> {
    (0..rng.random_range(1..30))
        .map(|k| {
            let status = [ItemStatus::Correct, ItemStatus::IncorrectPartial, ItemStatus::Missing][rng.random_range(0..3)];
            NoveltyItem {
                id: format!("n{k}"),
                description: String::new(),
                w: rng.random_range(0.01..=1.0),
                theta: None,
                theta_hat: None,
                status,
                level: if status == ItemStatus::Missing { 0.0 } else { LEVELS[rng.random_range(1..6)] },
            }
        })
        .collect()
}

fn metrics() -> Outcome {
    let root = fixtures().join("coverage");
    let expected: BTreeMap<String, BTreeMap<String, [f64; 5]>> =
        serde_json::from_str(&fs::read_to_string(root.join("expected.json")).unwrap()).map_err(|e| e.to_string())?;
    let runner = |_: &nerfsynth_core::bench::BenchEntry| -> Result<RunOutput, String> {
        Ok(RunOutput {
            report: trained(),
            repo: None,
        })
    };
    let mut cells = 0;
    for (system, rows) in &expected {
        let entries = load_manifest(&root.join(system).join("bench.json")).map_err(|e| e.to_string())?;
        let report = run_bench(&entries, &runner, &FixtureJudgments).map_err(|e| e.to_string())?;
        for row in &report.rows {
            let want = rows.get(&row.id).ok_or(format!("{system}/{}: no expected row", row.id))?;
            let got = [row.c, row.i, row.m, row.w, row.score].map(|v| v.unwrap_or(f64::NAN));
            ensure!(got == *want, "{system}/{}: got {got:?}, want {want:?}", row.id);
            cells += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let items = random_items(&mut rng);
        let cov = novelty_coverage(&items).map_err(|e| e.to_string())?;
        ensure!((cov.c + cov.i + cov.m - 1.0).abs() <= 1e-9, "C+I+M = {}", cov.c + cov.i + cov.m);
        let base = llm_score(&items).map_err(|e| e.to_string())?;
        for k in 1..8 {
            let scale = 2f64.powi(-k);
            let scaled: Vec<NoveltyItem> = items.iter().map(|i| NoveltyItem { w: i.w * scale, ..i.clone() }).collect();
            let s = llm_score(&scaled).map_err(|e| e.to_string())?;
            ensure!(s == base, "score {base} became {s} under scale {scale}");
        }
    }
    Ok(format!("{cells} published coverage rows reproduced; C+I+M and scale invariance hold on 1000 random sets"))
}

// 7. End to end on the minimal fixture.

fn synth(gateway: &Gateway) -> Result<SynthOutput, String> {
    let dir = fixtures().join("minimal");
    let doc = parse_markdown(&fs::read_to_string(dir.join("paper.md")).unwrap()).map_err(|e| e.to_string())?;
    let fetcher = FixtureFetcher::load(&dir.join("graph.json")).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default().synth(None);
    synthesize(
        &doc,
        &KnowledgeBase::empty(),
        &PluginGrammar::default_grammar(),
        &fetcher,
        gateway,
        &StubSandbox::new(),
        &cfg,
    )
    .map_err(|f| f.to_string())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let script = MockBackend::from_file(&fixtures().join("minimal/script.json")).map_err(|e| e.to_string())?;
    let cache = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = synth(&Gateway::mock(script).recording(cache.path()))?;
    let report = validate_files(&PluginGrammar::default_grammar(), &first.repo.records());
    ensure!(report.pass, "synthesized repo fails validation:\n{}", report.summary());
    let ladder = nerfsynth_core::bench::ladder_evaluate(&first.report, 25.0, RunConfig::default().ladder_tolerance_db)
        .map_err(|e| e.to_string())?;
    ensure!(ladder.trainable, "ladder stops at {}", ladder.level());

    let second = synth(&Gateway::replay(cache.path()))?;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    first.repo.write_dir(a.path()).map_err(|e| e.to_string())?;
    second.repo.write_dir(b.path()).map_err(|e| e.to_string())?;
    for path in first.repo.files.keys() {
        let (x, y) = (fs::read(a.path().join(path)).unwrap(), fs::read(b.path().join(path)).ok());
        ensure!(Some(x) == y, "{path} differs after replay");
    }
    ensure!(first.repo.files.len() == second.repo.files.len(), "file sets differ after replay");

    let mut critic = MockBackend::new();
    for k in 0..5 {
        let lr = 0.001 / (k + 1) as f64;
        critic = critic.push(
            DIAGNOSE_TAG,
            serde_json::json!({"diagnoses": [{"class": "blur", "role": "Config", "rationale": "underfit",
                "patch": {"target": "tinyfield/config.py", "kind": "hyperparameter-change", "key": "learning_rate", "value": lr}}]})
            .to_string(),
        );
    }
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let views = SyntheticViews(SceneConfig {
        floater: true,
        ..SceneConfig::default()
    });
    let out = refine(
        &first.repo,
        &views,
        40.0,
        &StubSandbox::new(),
        &Gateway::mock(critic),
        &RunConfig::default().refine(work.path(), None),
    )
    .map_err(|e| e.to_string())?;
    ensure!(out.history.len() == 5, "{} refine iterations", out.history.len());
    ensure!(out.history[4].decision == Decision::MaxIterations, "last decision {:?}", out.history[4].decision);
    ensure!(
        out.history.iter().all(|it| !it.patches.is_empty() && it.patches.iter().all(|p| p.reverted)),
        "a patch was kept"
    );
    ensure!(out.repo == first.repo, "repository changed by reverted refinement");
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "validates, reaches {}, replay is byte-identical, 5 refine iterations all reverted in {t:.2?}",
        ladder.level()
    ))
}

// 8. Defaults.

fn defaults() -> Outcome {
    let c = RunConfig::default();
    ensure!(c.ladder_tolerance_db == 0.5, "ladder tolerance {}", c.ladder_tolerance_db);
    ensure!(c.smoke_iters == 3000, "smoke iterations {}", c.smoke_iters);
    let json: serde_json::Value = serde_json::from_str(&c.to_json()).map_err(|e| e.to_string())?;
    ensure!(json["ladder_tolerance_db"] == 0.5 && json["smoke_iters"] == 3000, "serialized defaults {json}");
    Ok("ladder tolerance 0.5 dB, smoke iterations 3000".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("graph oracle", graph_oracle),
        ("citation closure", citation_closure),
        ("grammar mutations", grammar_mutations),
        ("image metrics", image_metrics),
        ("cross-view consensus", consensus),
        ("bench metrics", metrics),
        ("end to end", end_to_end),
        ("defaults", defaults),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
