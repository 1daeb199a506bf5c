use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::document::{parse_markdown, PaperDocument};
use crate::grammar::{validate_files, PluginGrammar};
use crate::repo::Repository;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("exemplar `{id}` fails grammar validation:\n{report}")]
    InvalidExemplar { id: String, report: String },
    #[error("knowledge base already has an entry `{0}`")]
    DuplicateId(String),
    #[error("no knowledge base entry `{0}`")]
    UnknownId(String),
    #[error("knowledge base index: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One row of `kb/index.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: String,
    pub title: String,
    pub year: Option<i32>,
    pub roles: Vec<String>,
    pub path: String,
}

/// Directory of `<id>/paper.md` + `<id>/repo/...` pairs indexed by
/// `index.json`.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    root: PathBuf,
    index: Vec<KbEntry>,
}

fn roles_of(repo: &Repository) -> Vec<String> {
    repo.records()
        .into_iter()
        .filter_map(|r| r.role)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn check(grammar: &PluginGrammar, id: &str, repo: &Repository) -> Result<(), KbError> {
    let report = validate_files(grammar, &repo.records());
    if report.pass {
        Ok(())
    } else {
        Err(KbError::InvalidExemplar {
            id: id.to_string(),
            report: report.summary(),
        })
    }
}

impl KnowledgeBase {
    /// An empty knowledge base that lives nowhere; stores are rejected.
    pub fn empty() -> Self {
        KnowledgeBase {
            root: PathBuf::new(),
            index: Vec::new(),
        }
    }

    /// Open (or create) a knowledge base, validating every exemplar.
    pub fn open(root: &Path, grammar: &PluginGrammar) -> Result<Self, KbError> {
        fs::create_dir_all(root)?;
        let index_path = root.join("index.json");
        let index: Vec<KbEntry> = match fs::read_to_string(&index_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| KbError::Malformed(e.to_string()))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let kb = KnowledgeBase {
            root: root.to_path_buf(),
            index,
        };
        let mut ids = BTreeSet::new();
        for entry in &kb.index {
            if !ids.insert(entry.id.as_str()) {
                return Err(KbError::DuplicateId(entry.id.clone()));
            }
            let (doc, repo) = kb.get(&entry.id)?;
            if doc.id != entry.id {
                return Err(KbError::Malformed(format!("paper id `{}` filed under `{}`", doc.id, entry.id)));
            }
            check(grammar, &entry.id, &repo)?;
        }
        Ok(kb)
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Validate and persist a pair, under an exclusive lock on the index.
    pub fn store_pair(&mut self, grammar: &PluginGrammar, doc: &PaperDocument, repo: &Repository) -> Result<(), KbError> {
        if self.root.as_os_str().is_empty() {
            return Err(KbError::Malformed("in-memory knowledge base is read-only".into()));
        }
        check(grammar, &doc.id, repo)?;
        let lock = File::create(self.root.join(".lock"))?;
        lock.lock()?;
        // Another writer may have added entries since we loaded.
        if let Ok(text) = fs::read_to_string(self.root.join("index.json")) {
            self.index = serde_json::from_str(&text).map_err(|e| KbError::Malformed(e.to_string()))?;
        }
        if self.index.iter().any(|e| e.id == doc.id) {
            return Err(KbError::DuplicateId(doc.id.clone()));
        }
        let dir = self.root.join(&doc.id);
        fs::create_dir_all(dir.join("repo"))?;
        fs::write(dir.join("paper.md"), doc.to_markdown())?;
        repo.write_dir(&dir.join("repo"))?;
        self.index.push(KbEntry {
            id: doc.id.clone(),
            title: doc.title.clone(),
            year: doc.year,
            roles: roles_of(repo),
            path: doc.id.clone(),
        });
        let tmp = self.root.join(".index.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&self.index).expect("index serializes"))?;
        fs::rename(tmp, self.root.join("index.json"))?;
        lock.unlock()?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<(PaperDocument, Repository), KbError> {
        let entry = self
            .index
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| KbError::UnknownId(id.to_string()))?;
        let dir = self.root.join(&entry.path);
        let doc = parse_markdown(&fs::read_to_string(dir.join("paper.md"))?)
            .map_err(|e| KbError::Malformed(format!("{id}: {e}")))?;
        let repo = Repository::read_dir(&dir.join("repo"))?;
        Ok((doc, repo))
    }

    /// Up to `k` entries ranked by role overlap with `roles`, then by id.
    pub fn select_exemplars(&self, roles: &BTreeSet<&str>, k: usize) -> Vec<&KbEntry> {
        let mut scored: Vec<(usize, &KbEntry)> = self
            .index
            .iter()
            .map(|e| (e.roles.iter().filter(|r| roles.contains(r.as_str())).count(), e))
            .filter(|(n, _)| *n > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        scored.into_iter().take(k).map(|(_, e)| e).collect()
    }

    /// First `max_lines` lines of the exemplar file with role `role`.
    pub fn snippet(&self, id: &str, role: &str, max_lines: usize) -> Option<String> {
        let (_, repo) = self.get(id).ok()?;
        let rec = repo.records().into_iter().find(|r| r.role.as_deref() == Some(role))?;
        Some(rec.source.lines().take(max_lines).collect::<Vec<_>>().join("\n"))
    }
}
