use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{Sandbox, SandboxError, SmokeReport, SmokeRequest};
use crate::repo::{interfaces_from_sources, scan_repository, top_level_raise, FileRecord, Repository};

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

static LR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"["']?\b(?:learning_rate|lr)\b["']?\s*[=:]\s*([0-9][0-9_.]*(?:[eE][+-]?\d+)?)"#).unwrap());
static UNIMPLEMENTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s+raise\s+NotImplementedError\b").unwrap());

const BLOCK_OPENERS: &[&str] = &[
    "def", "class", "if", "elif", "else", "for", "while", "with", "try", "except", "finally", "async",
];

/// Strip comments and the bodies of single-line string literals.
fn strip_line(line: &str, in_triple: &mut Option<&'static str>) -> String {
    let mut out = String::new();
    let mut rest = line;
    loop {
        if let Some(q) = *in_triple {
            match rest.find(q) {
                Some(i) => {
                    rest = &rest[i + 3..];
                    *in_triple = None;
                    out.push_str("\"\"");
                }
                None => return out,
            }
            continue;
        }
        let Some(i) = rest.find(['#', '"', '\'']) else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..i]);
        let ch = rest.as_bytes()[i];
        if ch == b'#' {
            return out;
        }
        let tail = &rest[i..];
        for q in ["\"\"\"", "'''"] {
            if tail.starts_with(q) {
                *in_triple = Some(q);
                rest = &tail[3..];
                break;
            }
        }
        if in_triple.is_some() {
            continue;
        }
        let quote = ch as char;
        match tail[1..].find(quote) {
            Some(j) => {
                out.push_str("\"\"");
                rest = &tail[j + 2..];
            }
            None => {
                // Unterminated literal; keep the quote so the caller notices.
                out.push(quote);
                return out;
            }
        }
    }
}

/// A coarse syntax check: balanced brackets, terminated strings and a colon
/// after block openers. Returns the 1-based line and a message.
pub fn check_syntax(source: &str) -> Result<(), (usize, String)> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut in_triple = None;
    let mut logical = String::new();
    let mut logical_start = 0;
    for (idx, raw) in source.lines().enumerate() {
        let n = idx + 1;
        let was_in_string = in_triple.is_some();
        let line = strip_line(raw, &mut in_triple);
        if line.ends_with(['"', '\'']) && !line.ends_with("\"\"") {
            return Err((n, "unterminated string literal".into()));
        }
        if stack.is_empty() && !was_in_string {
            logical.clear();
            logical_start = n;
        }
        for ch in line.chars() {
            match ch {
                '(' | '[' | '{' => stack.push((ch, n)),
                ')' | ']' | '}' => {
                    let want = match ch {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == want => {}
                        _ => return Err((n, format!("unmatched '{ch}'"))),
                    }
                }
                _ => {}
            }
        }
        logical.push_str(&line);
        logical.push(' ');
        if stack.is_empty() && in_triple.is_none() {
            let text = logical.trim();
            let first = text.split(|c: char| !(c.is_alphanumeric() || c == '_')).next().unwrap_or("");
            if BLOCK_OPENERS.contains(&first) && !has_top_colon(text) {
                return Err((logical_start, "expected ':'".into()));
            }
        }
    }
    if let Some((ch, n)) = stack.pop() {
        return Err((n, format!("'{ch}' was never closed")));
    }
    if in_triple.is_some() {
        return Err((source.lines().count(), "unterminated triple-quoted string".into()));
    }
    Ok(())
}

fn has_top_colon(text: &str) -> bool {
    let mut depth = 0i32;
    for ch in text.chars() {
        match ch {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ':' if depth == 0 => return true,
            _ => {}
        }
    }
    false
}

fn traceback(path: &str, line: usize, kind: &str, msg: &str) -> String {
    format!("Traceback (most recent call last):\n  File \"{path}\", line {line}, in <module>\n{kind}: {msg}")
}

/// Toy differentiable fit of a small RGB image by a random-feature model,
/// standing in for radiance-field training.
#[derive(Debug, Clone)]
pub struct StubTrainer {
    features: Vec<Vec<f64>>,
    target: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub steps_completed: u64,
    pub nan_detected: bool,
    pub loss_first: Option<f64>,
    pub loss_last: Option<f64>,
    pub mse: f64,
}

impl StubTrainer {
    pub const SIDE: usize = 8;
    pub const FEATURES: usize = 16;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs: Vec<(f64, f64, f64)> = (0..Self::FEATURES)
            .map(|_| (rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let n = Self::SIDE;
        let mut features = Vec::with_capacity(n * n);
        let mut target = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let (u, v) = (x as f64 / (n - 1) as f64, y as f64 / (n - 1) as f64);
                features.push(freqs.iter().map(|(a, b, c)| (a * u + b * v + c).cos()).collect());
                target.push([
                    0.5 + 0.4 * (PI * u).sin() * (PI * v).cos(),
                    0.5 + 0.3 * (2.0 * PI * (u + v)).cos(),
                    0.2 + 0.6 * u * v,
                ]);
            }
        }
        StubTrainer { features, target }
    }

    fn loss(&self, theta: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
        let p = self.features.len() as f64;
        let mut grad = vec![[0.0; 3]; theta.len()];
        let mut loss = 0.0;
        for (phi, y) in self.features.iter().zip(&self.target) {
            for c in 0..3 {
                let pred: f64 = phi.iter().zip(theta).map(|(f, t)| f * t[c]).sum();
                let r = pred - y[c];
                loss += r * r / p;
                for (g, f) in grad.iter_mut().zip(phi) {
                    g[c] += 2.0 * r * f / p;
                }
            }
        }
        (loss, grad)
    }

    /// Gradient descent from zero; stops at the first non-finite loss or
    /// parameter. `nan_at` forces a NaN loss at that 1-based step.
    pub fn train(&self, iters: u64, lr: f64, nan_at: Option<u64>) -> TrainOutcome {
        let mut theta = vec![[0.0; 3]; Self::FEATURES];
        let mut out = TrainOutcome {
            steps_completed: 0,
            nan_detected: false,
            loss_first: None,
            loss_last: None,
            mse: f64::NAN,
        };
        for step in 1..=iters {
            let (mut loss, grad) = self.loss(&theta);
            if nan_at == Some(step) {
                loss = f64::NAN;
            }
            if !loss.is_finite() {
                out.nan_detected = true;
                out.steps_completed = step;
                return out;
            }
            for (t, g) in theta.iter_mut().zip(&grad) {
                for c in 0..3 {
                    t[c] -= lr * g[c];
                }
            }
            if theta.iter().flatten().any(|t| !t.is_finite()) {
                out.nan_detected = true;
                out.steps_completed = step;
                return out;
            }
            out.loss_first.get_or_insert(loss);
            out.loss_last = Some(loss);
            out.steps_completed = step;
        }
        out.mse = self.loss(&theta).0 / 3.0;
        out
    }
}

/// In-process stand-in for the shim's stub mode. Import resolution and
/// registration are checked statically; training runs [`StubTrainer`] with
/// the learning rate found in the Config file.
#[derive(Debug, Clone, Default)]
pub struct StubSandbox {
    pub seed: u64,
    pub nan_at_step: Option<u64>,
}

impl StubSandbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nan_at(mut self, step: u64) -> Self {
        self.nan_at_step = Some(step);
        self
    }

    fn import_errors(files: &[FileRecord]) -> Option<(String, String)> {
        for f in files.iter().filter(|f| f.path.ends_with(".py")) {
            if let Err((line, msg)) = check_syntax(&f.source) {
                return Some((f.path.clone(), traceback(&f.path, line, "SyntaxError", &msg)));
            }
            if let Some((line, stmt)) = top_level_raise(&f.source) {
                return Some((f.path.clone(), traceback(&f.path, line, "RuntimeError", &stmt)));
            }
        }
        let scan = scan_repository(files);
        let paths: BTreeMap<_, _> = files.iter().map(|f| (f.id.clone(), f.path.as_str())).collect();
        if let Some(d) = scan.dangling.first() {
            let path = paths[&d.importer];
            let msg = format!("No module named '{}'", d.module);
            return Some((path.to_string(), traceback(path, d.line, "ModuleNotFoundError", &msg)));
        }
        let interfaces = interfaces_from_sources(files);
        for imp in &scan.imports {
            let Some(provider) = interfaces.get(&imp.provider) else {
                continue;
            };
            for name in &imp.names {
                let known = provider.export(name).is_some() || provider.imports.iter().any(|i| &i.name == name);
                if !known {
                    let path = paths[&imp.importer];
                    let msg = format!("cannot import name '{name}' from '{}'", imp.provider);
                    return Some((path.to_string(), traceback(path, imp.line, "ImportError", &msg)));
                }
            }
        }
        None
    }

    fn learning_rate(files: &[FileRecord]) -> f64 {
        files
            .iter()
            .filter(|f| f.role.as_deref() == Some("Config"))
            .find_map(|f| LR.captures(&f.source))
            .and_then(|c| c[1].replace('_', "").parse().ok())
            .unwrap_or(DEFAULT_LEARNING_RATE)
    }
}

impl Sandbox for StubSandbox {
    fn run(&self, repo: &Repository, req: &SmokeRequest) -> Result<SmokeReport, SandboxError> {
        let files = repo.records();
        if let Some((file, tb)) = Self::import_errors(&files) {
            return Ok(SmokeReport::failed("import", Some(&file), tb));
        }
        let mut report = SmokeReport {
            imports_resolve: true,
            ..Default::default()
        };

        let config = files.iter().find(|f| {
            f.role.as_deref() == Some("Config")
                && crate::repo::scan_exports(&f.source).iter().any(|(n, _)| n == "method_specification")
        });
        if config.is_none() {
            report.error = Some(super::SmokeError {
                stage: "register".into(),
                file: None,
                traceback: "KeyError: no Config file exports 'method_specification'".into(),
            });
            return Ok(report);
        }
        report.registered = true;

        report.train_started = true;
        for f in &files {
            if let Some((idx, line)) = f.source.lines().enumerate().find(|(_, l)| UNIMPLEMENTED.is_match(l)) {
                report.error = Some(super::SmokeError {
                    stage: "train".into(),
                    file: Some(f.path.clone()),
                    traceback: format!(
                        "Traceback (most recent call last):\n  File \"{}\", line {}\n    {}\nNotImplementedError",
                        f.path,
                        idx + 1,
                        line.trim()
                    ),
                });
                return Ok(report);
            }
        }

        let outcome = StubTrainer::new(self.seed).train(req.iters, Self::learning_rate(&files), self.nan_at_step);
        report.steps_completed = outcome.steps_completed;
        report.nan_detected = outcome.nan_detected;
        report.loss_first = outcome.loss_first;
        report.loss_last = outcome.loss_last;
        if req.eval && !outcome.nan_detected {
            report.psnr_eval = Some(-10.0 * outcome.mse.log10());
        }
        // Simulated, so reports stay byte-identical across runs.
        report.wall_time_s = outcome.steps_completed as f64 * 1e-4;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo(config: &str) -> Repository {
        let mut r = Repository::new();
        r.insert("m/__init__.py", "");
        r.insert("m/config.py", config);
        r.insert("m/data_manager.py", "# role: DataManager\nfrom .config import method_specification\n");
        r.insert(
            "m/model.py",
            "# role: Model\nfrom .config import method_specification\n\nclass M:\n    def get_outputs(self, ray_bundle):\n        return {}\n\n    def get_loss_dict(self):\n        return {}\n",
        );
        r.insert("m/pipeline.py", "# role: Pipeline\nfrom .model import M\n");
        r
    }

    const CONFIG: &str = "# role: Config\nmethod_specification = dict(name=\"m\", learning_rate=0.05)\n";

    fn req(iters: u64) -> SmokeRequest {
        SmokeRequest {
            iters,
            eval: true,
            data: None,
        }
    }

    #[test]
    fn stub_trains_deterministically() {
        let a = StubSandbox::new().run(&repo(CONFIG), &req(10)).unwrap();
        let b = StubSandbox::new().run(&repo(CONFIG), &req(10)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.imports_resolve && a.registered && a.train_started);
        assert_eq!(a.steps_completed, 10);
        assert!(!a.nan_detected);
        assert!(a.loss_last.unwrap() <= a.loss_first.unwrap());
        a.check_invariants().unwrap();
    }

    #[test]
    fn nan_injection_stops_the_loop() {
        let r = StubSandbox::new().with_nan_at(5).run(&repo(CONFIG), &req(10)).unwrap();
        assert!(r.nan_detected);
        assert_eq!(r.steps_completed, 5);
        assert_eq!(r.psnr_eval, None);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let cfg = CONFIG.replace("0.05", "50.0");
        let r = StubSandbox::new().run(&repo(&cfg), &req(200)).unwrap();
        assert!(r.nan_detected);
    }

    #[test]
    fn broken_imports_are_reported() {
        let mut r = repo(CONFIG);
        r.insert("m/pipeline.py", "# role: Pipeline\nfrom .modle import M\n");
        let rep = StubSandbox::new().run(&r, &req(10)).unwrap();
        assert!(!rep.imports_resolve && !rep.registered);
        let err = rep.error.unwrap();
        assert_eq!(err.stage, "import");
        assert_eq!(err.file.as_deref(), Some("m/pipeline.py"));

        let mut r = repo(CONFIG);
        r.insert("m/model.py", "# role: Model\ndef get_outputs(self:\n    pass\n");
        let rep = StubSandbox::new().run(&r, &req(10)).unwrap();
        assert!(rep.error.unwrap().traceback.contains("SyntaxError"));
    }

    #[test]
    fn unimplemented_method_fails_training() {
        let mut r = repo(CONFIG);
        r.insert(
            "m/model.py",
            "# role: Model\nclass M:\n    def get_outputs(self, ray_bundle):\n        raise NotImplementedError\n",
        );
        let rep = StubSandbox::new().run(&r, &req(10)).unwrap();
        assert!(rep.train_started && !rep.is_trainable());
        assert_eq!(rep.error.unwrap().file.as_deref(), Some("m/model.py"));
    }

    #[test]
    fn syntax_checker() {
        assert!(check_syntax("def f(x):\n    return (x +\n        1)\n").is_ok());
        assert!(check_syntax("x = '# not a comment'\ns = \"\"\"\n(\n\"\"\"\n").is_ok());
        assert!(check_syntax("if x: y = 1\n").is_ok());
        assert_eq!(check_syntax("def f(x)\n    pass\n").unwrap_err().0, 1);
        assert_eq!(check_syntax("x = [1, 2\n").unwrap_err().0, 1);
        assert!(check_syntax("x = 'abc\n").is_err());
        assert!(check_syntax("x = (1]\n").is_err());
    }

    #[test]
    fn default_lr_converges_in_smoke_window() {
        let out = StubTrainer::new(0).train(3000, DEFAULT_LEARNING_RATE, None);
        assert!(!out.nan_detected);
        let psnr = -10.0 * out.mse.log10();
        assert!(psnr > 18.0, "{psnr}");
        let faster = StubTrainer::new(0).train(3000, 0.2, None);
        assert!(-10.0 * faster.mse.log10() > psnr);
    }
}
