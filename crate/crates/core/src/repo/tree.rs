use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{python, FileRecord};

/// A repository as a plain file tree: repository-relative path to contents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repository {
    pub files: BTreeMap<String, String>,
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, contents: impl Into<String>) {
        self.files.insert(path.into(), contents.into());
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.get(path).map(String::as_str)
    }

    /// Load every regular file below `root`, skipping hidden entries and
    /// bytecode caches.
    pub fn read_dir(root: &Path) -> io::Result<Self> {
        let mut repo = Repository::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir)? {
                let entry = entry?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                if name.starts_with('.') || name == "__pycache__" {
                    continue;
                }
                let path = entry.path();
                if entry.file_type()?.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path
                        .strip_prefix(root)
                        .expect("walked below root")
                        .components()
                        .map(|c| c.as_os_str().to_string_lossy().into_owned())
                        .collect::<Vec<_>>()
                        .join("/");
                    repo.files.insert(rel, fs::read_to_string(&path)?);
                }
            }
        }
        Ok(repo)
    }

    pub fn write_dir(&self, root: &Path) -> io::Result<()> {
        for (rel, contents) in &self.files {
            let path = root.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, contents)?;
        }
        Ok(())
    }

    /// Python sources as file records, with roles read from `# role:` headers.
    pub fn records(&self) -> Vec<FileRecord> {
        self.files
            .iter()
            .filter(|(p, _)| p.ends_with(".py"))
            .map(|(p, s)| FileRecord::new(p.clone(), python::scan_role(s), s.clone()))
            .collect()
    }
}
