use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CriticError;
use crate::repo::Repository;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatchEdit {
    /// Replace the literal assigned to `key`. A string value is inserted as
    /// Python source text, a number as written.
    HyperparameterChange { key: String, value: Value },
    /// Replace the single occurrence of `old` with `new`.
    CodeEdit { old: String, new: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub target: String,
    #[serde(flatten)]
    pub edit: PatchEdit,
}

impl Patch {
    pub fn hyperparameter(target: impl Into<String>, key: impl Into<String>, value: Value) -> Self {
        Patch {
            target: target.into(),
            edit: PatchEdit::HyperparameterChange { key: key.into(), value },
        }
    }

    pub fn code_edit(target: impl Into<String>, old: impl Into<String>, new: impl Into<String>) -> Self {
        Patch {
            target: target.into(),
            edit: PatchEdit::CodeEdit {
                old: old.into(),
                new: new.into(),
            },
        }
    }

    pub fn check(&self) -> Result<(), CriticError> {
        let bad = |m: &str| Err(CriticError::MalformedPatch(format!("{}: {m}", self.target)));
        if self.target.is_empty() {
            return bad("empty target");
        }
        match &self.edit {
            PatchEdit::HyperparameterChange { key, value } => {
                if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return bad("key must be an identifier");
                }
                if !(value.is_number() || value.is_string() || value.is_boolean()) {
                    return bad("value must be a number, string or boolean");
                }
            }
            PatchEdit::CodeEdit { old, .. } if old.is_empty() => return bad("empty old span"),
            PatchEdit::CodeEdit { .. } => {}
        }
        Ok(())
    }
}

const LITERAL: &str = r#"[-+]?(?:\d[\d_]*\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|"[^"\n]*"|'[^'\n]*'|True|False|None"#;

fn literal_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        other => other.to_string(),
    }
}

fn assignment(key: &str) -> Regex {
    Regex::new(&format!(
        r#"(?:\b{k}\b|"{k}"|'{k}')\s*[:=]\s*(?P<lit>{LITERAL})"#,
        k = regex::escape(key)
    ))
    .expect("assignment regex")
}

/// `source` with `edit` applied.
pub fn patch_source(source: &str, patch: &Patch) -> Result<String, CriticError> {
    let mismatch = |m: String| CriticError::SpanMismatch {
        file: patch.target.clone(),
        detail: m,
    };
    match &patch.edit {
        PatchEdit::CodeEdit { old, new } => match source.matches(old.as_str()).count() {
            1 => Ok(source.replacen(old.as_str(), new, 1)),
            0 => Err(mismatch("old span not found".into())),
            n => Err(mismatch(format!("old span occurs {n} times"))),
        },
        PatchEdit::HyperparameterChange { key, value } => {
            let re = assignment(key);
            let hits: Vec<_> = re.captures_iter(source).collect();
            match hits.as_slice() {
                [c] => {
                    let lit = c.name("lit").expect("literal group");
                    Ok(format!("{}{}{}", &source[..lit.start()], literal_text(value), &source[lit.end()..]))
                }
                [] => Err(mismatch(format!("no literal assigned to `{key}`"))),
                _ => Err(mismatch(format!("`{key}` is assigned {} times", hits.len()))),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RevertToken(pub u64);

#[derive(Debug, Clone)]
struct Entry {
    token: RevertToken,
    target: String,
    before: String,
}

/// Applied patches with the bytes they replaced.
#[derive(Debug, Clone, Default)]
pub struct PatchJournal {
    next: u64,
    stack: Vec<Entry>,
}

impl PatchJournal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    /// Apply `patch` to `repo`; on error the repository is untouched.
    pub fn apply(&mut self, repo: &mut Repository, patch: &Patch) -> Result<RevertToken, CriticError> {
        patch.check()?;
        let before = repo
            .get(&patch.target)
            .ok_or_else(|| CriticError::MissingTarget(patch.target.clone()))?
            .to_string();
        let after = patch_source(&before, patch)?;
        repo.insert(patch.target.clone(), after);
        self.next += 1;
        let token = RevertToken(self.next);
        self.stack.push(Entry {
            token,
            target: patch.target.clone(),
            before,
        });
        Ok(token)
    }

    /// Undo one patch. A patch whose file was touched again later can only
    /// be reverted after those later patches.
    pub fn revert(&mut self, repo: &mut Repository, token: RevertToken) -> Result<(), CriticError> {
        let i = self
            .stack
            .iter()
            .position(|e| e.token == token)
            .ok_or(CriticError::UnknownRevertToken(token.0))?;
        if self.stack[i + 1..].iter().any(|e| e.target == self.stack[i].target) {
            return Err(CriticError::OutOfOrderRevert(token.0));
        }
        let e = self.stack.remove(i);
        repo.insert(e.target, e.before);
        Ok(())
    }

    /// Undo everything, newest first.
    pub fn revert_all(&mut self, repo: &mut Repository) {
        while let Some(e) = self.stack.pop() {
            repo.insert(e.target, e.before);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    const CONFIG: &str = "# role: Config\nmethod_specification = dict(\n    learning_rate=0.01,\n    \"num_rays\": 4096,\n)\n";

    fn repo() -> Repository {
        let mut r = Repository::new();
        r.insert("m/config.py", CONFIG);
        r.insert("m/model.py", "def f(x):\n    return x * 2\n");
        r
    }

    #[test]
    fn hyperparameter_round_trip() {
        let mut r = repo();
        let mut j = PatchJournal::new();
        let t = j.apply(&mut r, &Patch::hyperparameter("m/config.py", "learning_rate", json!(0.001))).unwrap();
        assert!(r.get("m/config.py").unwrap().contains("learning_rate=0.001,"));
        j.revert(&mut r, t).unwrap();
        assert_eq!(r, repo());
        assert!(matches!(j.revert(&mut r, t), Err(CriticError::UnknownRevertToken(_))));
    }

    #[test]
    fn quoted_keys_are_found() {
        let p = Patch::hyperparameter("m/config.py", "num_rays", json!(1024));
        assert!(patch_source(CONFIG, &p).unwrap().contains("\"num_rays\": 1024,"));
    }

    #[test]
    fn stale_span_leaves_repo_untouched() {
        let mut r = repo();
        let mut j = PatchJournal::new();
        let err = j.apply(&mut r, &Patch::code_edit("m/model.py", "x * 3", "x * 4")).unwrap_err();
        assert!(matches!(err, CriticError::SpanMismatch { .. }));
        assert_eq!(r, repo());
        assert!(j.is_empty());
    }

    #[test]
    fn lifo_stack_restores_bytes() {
        let mut r = repo();
        let mut j = PatchJournal::new();
        let a = j.apply(&mut r, &Patch::code_edit("m/model.py", "x * 2", "x * 3")).unwrap();
        let b = j.apply(&mut r, &Patch::code_edit("m/model.py", "x * 3", "x * 5")).unwrap();
        assert!(matches!(j.revert(&mut r, a), Err(CriticError::OutOfOrderRevert(_))));
        j.revert(&mut r, b).unwrap();
        j.revert(&mut r, a).unwrap();
        assert_eq!(r, repo());
    }

    #[test]
    fn serde_shape() {
        let p = Patch::hyperparameter("m/config.py", "lr", json!(0.1));
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v, json!({"target": "m/config.py", "kind": "hyperparameter-change", "key": "lr", "value": 0.1}));
        let back: Patch = serde_json::from_value(json!({"target": "a.py", "kind": "code-edit", "old": "x", "new": "y"})).unwrap();
        assert_eq!(back, Patch::code_edit("a.py", "x", "y"));
    }

    proptest! {
        #[test]
        fn apply_then_revert_all_is_identity(
            edits in proptest::collection::vec((0usize..2, 0u32..1000), 1..6)
        ) {
            let mut r = repo();
            let mut j = PatchJournal::new();
            for (which, v) in edits {
                let p = if which == 0 {
                    Patch::hyperparameter("m/config.py", "learning_rate", json!(v))
                } else {
                    let cur = r.get("m/model.py").unwrap().to_string();
                    let old = cur.lines().nth(1).unwrap().to_string();
                    Patch::code_edit("m/model.py", old, format!("    return x * {v}"))
                };
                j.apply(&mut r, &p).unwrap();
            }
            j.revert_all(&mut r);
            prop_assert_eq!(r, repo());
        }
    }
}
