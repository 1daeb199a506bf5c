//! Line-oriented scanning of generated Python sources.
//!
//! Only module-level statements are considered: imports and definitions that
//! start in column 0, plus one level of class methods. Text inside
//! triple-quoted strings is skipped.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::shape::ShapeSignature;

static FROM_IMPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^from\s+(\.*)([\w.]*)\s+import\s+(.*)$").unwrap());
static PLAIN_IMPORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^import\s+(.*)$").unwrap());
static TOP_DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:async\s+)?def\s+([A-Za-z_]\w*)\s*\(").unwrap());
static TOP_CLASS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^class\s+([A-Za-z_]\w*)\s*[(:]").unwrap());
static TOP_ASSIGN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Za-z_]\w*)\s*(?::[^=]+)?=[^=]").unwrap());
static METHOD_DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^    (?:async\s+)?def\s+([A-Za-z_]\w*)\s*\(").unwrap());
static SHAPE_NOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\s*shape:\s*(.+?)\s*$").unwrap());
static ROLE_NOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^#\s*role:\s*(\w+)\s*$").unwrap());

/// Dotted module path of a repository-relative `.py` path.
pub fn module_of(path: &str) -> Option<String> {
    let stem = path.strip_suffix(".py")?;
    let stem = stem.strip_suffix("/__init__").unwrap_or(stem);
    if stem == "__init__" {
        return None;
    }
    Some(stem.replace('/', "."))
}

pub fn is_package_init(path: &str) -> bool {
    path == "__init__.py" || path.ends_with("/__init__.py")
}

/// A module-level import statement with its target made absolute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportStmt {
    pub line: usize,
    pub module: String,
    pub names: Vec<String>,
    pub relative: bool,
    /// `from X import ...` as opposed to `import X`.
    pub from_form: bool,
}

/// Strip triple-quoted string bodies so their contents never look like code.
fn code_lines(source: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut in_string: Option<&str> = None;
    for (idx, raw) in source.lines().enumerate() {
        let mut line = String::new();
        let mut rest = raw;
        loop {
            match in_string {
                Some(q) => match rest.find(q) {
                    Some(end) => {
                        rest = &rest[end + 3..];
                        in_string = None;
                    }
                    None => break,
                },
                None => {
                    let next = ["\"\"\"", "'''"]
                        .iter()
                        .filter_map(|q| rest.find(q).map(|i| (i, *q)))
                        .min_by_key(|(i, _)| *i);
                    match next {
                        Some((i, q)) => {
                            line.push_str(&rest[..i]);
                            rest = &rest[i + 3..];
                            in_string = Some(q);
                        }
                        None => {
                            line.push_str(rest);
                            break;
                        }
                    }
                }
            }
        }
        out.push((idx + 1, line));
    }
    out
}

fn split_names(list: &str) -> Vec<String> {
    list.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.split_whitespace().next().unwrap_or("").to_string())
        .filter(|s| !s.is_empty() && s != "*")
        .collect()
}

/// Resolve a relative module reference against the importing module.
fn absolutize(importer: &str, importer_is_package: bool, dots: usize, module: &str) -> Option<String> {
    let mut base: Vec<&str> = importer.split('.').collect();
    if !importer_is_package {
        base.pop();
    }
    for _ in 1..dots {
        base.pop()?;
    }
    if !module.is_empty() {
        base.extend(module.split('.'));
    }
    Some(base.join("."))
}

/// Scan the module-level imports of a file at repository path `path`.
pub fn scan_imports(path: &str, source: &str) -> Vec<ImportStmt> {
    let importer = module_of(path).unwrap_or_default();
    let is_pkg = is_package_init(path);
    let lines = code_lines(source);
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (lineno, ref text) = lines[i];
        let text = text.split('#').next().unwrap_or("").trim_end().to_string();
        if let Some(c) = FROM_IMPORT.captures(&text) {
            let dots = c[1].len();
            let module = c[2].to_string();
            let mut list = c[3].trim().to_string();
            if list.starts_with('(') && !list.contains(')') {
                while i + 1 < lines.len() {
                    i += 1;
                    let more = lines[i].1.split('#').next().unwrap_or("").to_string();
                    list.push(' ');
                    list.push_str(more.trim());
                    if more.contains(')') {
                        break;
                    }
                }
            }
            let list = list.trim_start_matches('(').replace(')', "");
            let names = split_names(list.trim_end_matches('\\'));
            let target = if dots > 0 {
                absolutize(&importer, is_pkg, dots, &module)
            } else {
                Some(module)
            };
            if let Some(target) = target {
                out.push(ImportStmt {
                    line: lineno,
                    module: target,
                    names,
                    relative: dots > 0,
                    from_form: true,
                });
            } else {
                out.push(ImportStmt {
                    line: lineno,
                    module: format!("{}{}", ".".repeat(dots), &c[2]),
                    names,
                    relative: true,
                    from_form: true,
                });
            }
        } else if let Some(c) = PLAIN_IMPORT.captures(&text) {
            for m in split_names(&c[1]) {
                out.push(ImportStmt {
                    line: lineno,
                    module: m,
                    names: Vec::new(),
                    relative: false,
                    from_form: false,
                });
            }
        }
        i += 1;
    }
    out
}

/// Names a file makes available to importers, with any `# shape:` notes.
pub fn scan_exports(source: &str) -> Vec<(String, Option<ShapeSignature>)> {
    let mut names: Vec<String> = Vec::new();
    let mut in_class = false;
    let mut shapes: BTreeMap<String, ShapeSignature> = BTreeMap::new();
    for (_, line) in code_lines(source) {
        if let Some(c) = SHAPE_NOTE.captures(&line) {
            if let Ok(sig) = c[1].parse::<ShapeSignature>() {
                shapes.entry(sig.name.clone()).or_insert(sig);
            }
        }
        let code = line.split('#').next().unwrap_or("");
        if code.trim().is_empty() {
            continue;
        }
        let push = |names: &mut Vec<String>, n: &str| {
            if !n.starts_with('_') && !names.iter().any(|x| x == n) {
                names.push(n.to_string());
            }
        };
        if !code.starts_with(char::is_whitespace) {
            in_class = false;
            if let Some(c) = TOP_DEF.captures(code) {
                push(&mut names, &c[1]);
            } else if let Some(c) = TOP_CLASS.captures(code) {
                push(&mut names, &c[1]);
                in_class = true;
            } else if let Some(c) = TOP_ASSIGN.captures(code) {
                push(&mut names, &c[1]);
            }
        } else if in_class {
            if let Some(c) = METHOD_DEF.captures(code) {
                push(&mut names, &c[1]);
            }
        }
    }
    names
        .into_iter()
        .map(|n| {
            let sig = shapes.get(&n).cloned();
            (n, sig)
        })
        .collect()
}

/// The `# role: X` header, looked for in the first few lines.
pub fn scan_role(source: &str) -> Option<String> {
    source
        .lines()
        .take(8)
        .find_map(|l| ROLE_NOTE.captures(l.trim()).map(|c| c[1].to_string()))
}

/// Module-level `raise` statements; the stub trainer treats these as
/// import-time failures.
pub fn top_level_raise(source: &str) -> Option<(usize, String)> {
    code_lines(source)
        .into_iter()
        .find(|(_, l)| l.starts_with("raise "))
        .map(|(n, l)| (n, l.trim().to_string()))
}
