use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaperError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heading {
    pub level: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub index: usize,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureAsset {
    pub path: String,
    /// Index into `captions`.
    pub caption: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibEntry {
    pub cite_key: String,
    pub title: String,
    pub year: i32,
    #[serde(default)]
    pub external_ids: BTreeMap<String, String>,
    /// The reference line as written, without the `[key]` prefix.
    pub text: String,
}

/// Document order, as indices into the typed lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Heading(usize),
    Paragraph(usize),
    Equation(usize),
    Algorithm(usize),
    Caption(usize),
    Figure(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperDocument {
    pub id: String,
    pub title: String,
    pub year: Option<i32>,
    pub headings: Vec<Heading>,
    pub paragraphs: Vec<String>,
    pub algorithm_blocks: Vec<String>,
    pub captions: Vec<String>,
    pub references: Vec<BibEntry>,
    pub equations: Vec<Equation>,
    pub figure_assets: Vec<FigureAsset>,
    pub blocks: Vec<Block>,
}

/// A heading plus the blocks up to the next heading of the same or higher
/// level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub heading: usize,
    pub blocks: std::ops::Range<usize>,
}

static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(#{1,6})\s+(.+?)\s*#*\s*$").unwrap());
static CAPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:Figure|Fig\.|Table)\s+[A-Za-z]?\d+[.:]").unwrap());
static FIGURE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^!\[([^\]]*)\]\(([^)\s]+)\)\s*$").unwrap());
static REF_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\[([^\]\s]+)\]\s+(.+)$").unwrap());
static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(19|20)\d{2}\b").unwrap());
static EXT_ID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(arXiv|doi|DOI):\s*(\S+?)[.,;]?(?:\s|$)").unwrap());
static CITE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([A-Za-z0-9_:\-]+)\]").unwrap());

pub fn slug(text: &str) -> String {
    let mut out = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn is_references_heading(text: &str) -> bool {
    matches!(text.trim().to_lowercase().as_str(), "references" | "bibliography")
}

fn parse_bib(key: &str, text: &str) -> BibEntry {
    let segments: Vec<&str> = text
        .split(". ")
        .map(|s| s.trim().trim_end_matches('.'))
        .filter(|s| !s.is_empty())
        .collect();
    let title = match segments.len() {
        0 => String::new(),
        1 | 2 => segments[0].to_string(),
        _ => segments[1].to_string(),
    };
    let year = YEAR
        .find_iter(text)
        .last()
        .and_then(|m| m.as_str().parse().ok())
        .unwrap_or(0);
    let external_ids = EXT_ID
        .captures_iter(text)
        .map(|c| (c[1].to_lowercase(), c[2].to_string()))
        .collect();
    BibEntry {
        cite_key: key.to_string(),
        title,
        year,
        external_ids,
        text: text.to_string(),
    }
}

/// Parse a paper that was already converted to markdown.
pub fn parse_markdown(text: &str) -> Result<PaperDocument, PaperError> {
    let malformed = |m: &str| PaperError::MalformedDocument(m.to_string());
    let mut lines: Vec<&str> = text.lines().collect();
    let mut front: BTreeMap<String, String> = BTreeMap::new();
    if lines.first().map(|l| l.trim()) == Some("---") {
        let end = lines[1..]
            .iter()
            .position(|l| l.trim() == "---")
            .ok_or_else(|| malformed("unclosed front matter"))?;
        for l in &lines[1..=end] {
            if let Some((k, v)) = l.split_once(':') {
                front.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        lines.drain(..end + 2);
    }

    let mut doc = PaperDocument {
        id: String::new(),
        title: String::new(),
        year: None,
        headings: Vec::new(),
        paragraphs: Vec::new(),
        algorithm_blocks: Vec::new(),
        captions: Vec::new(),
        references: Vec::new(),
        equations: Vec::new(),
        figure_assets: Vec::new(),
        blocks: Vec::new(),
    };
    let mut in_refs = false;
    let mut saw_refs = false;
    let mut para: Vec<&str> = Vec::new();
    let flush = |doc: &mut PaperDocument, para: &mut Vec<&str>| {
        if !para.is_empty() {
            doc.paragraphs.push(para.join("\n"));
            doc.blocks.push(Block::Paragraph(doc.paragraphs.len() - 1));
            para.clear();
        }
    };

    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();
        if let Some(c) = HEADING.captures(trimmed) {
            flush(&mut doc, &mut para);
            let text = c[2].to_string();
            in_refs = is_references_heading(&text);
            saw_refs |= in_refs;
            doc.headings.push(Heading {
                level: c[1].len() as u8,
                text,
            });
            doc.blocks.push(Block::Heading(doc.headings.len() - 1));
        } else if trimmed.is_empty() {
            flush(&mut doc, &mut para);
        } else if in_refs {
            flush(&mut doc, &mut para);
            if let Some(c) = REF_LINE.captures(trimmed) {
                doc.references.push(parse_bib(&c[1], c[2].trim()));
            } else if let Some(last) = doc.references.last_mut() {
                // Wrapped reference line.
                last.text.push(' ');
                last.text.push_str(trimmed);
                *last = parse_bib(&last.cite_key.clone(), &last.text.clone());
            }
        } else if let Some(rest) = trimmed.strip_prefix("$$") {
            flush(&mut doc, &mut para);
            let source = if let Some(inner) = rest.strip_suffix("$$") {
                inner.trim().to_string()
            } else {
                let mut body: Vec<&str> = if rest.trim().is_empty() { Vec::new() } else { vec![rest.trim()] };
                loop {
                    i += 1;
                    let Some(l) = lines.get(i) else {
                        return Err(malformed("unclosed `$$` equation fence"));
                    };
                    let t = l.trim();
                    if let Some(before) = t.strip_suffix("$$") {
                        if !before.trim().is_empty() {
                            body.push(before.trim());
                        }
                        break;
                    }
                    body.push(t);
                }
                body.join("\n")
            };
            if source.is_empty() {
                return Err(malformed("empty equation"));
            }
            doc.equations.push(Equation {
                index: doc.equations.len(),
                source,
            });
            doc.blocks.push(Block::Equation(doc.equations.len() - 1));
        } else if trimmed.starts_with("```") {
            flush(&mut doc, &mut para);
            let mut body: Vec<&str> = Vec::new();
            loop {
                i += 1;
                let Some(l) = lines.get(i) else {
                    return Err(malformed("unclosed code fence"));
                };
                if l.trim_start().starts_with("```") {
                    break;
                }
                body.push(l);
            }
            doc.algorithm_blocks.push(body.join("\n"));
            doc.blocks.push(Block::Algorithm(doc.algorithm_blocks.len() - 1));
        } else if let Some(c) = FIGURE.captures(trimmed) {
            flush(&mut doc, &mut para);
            doc.captions.push(c[1].to_string());
            doc.figure_assets.push(FigureAsset {
                path: c[2].to_string(),
                caption: doc.captions.len() - 1,
            });
            doc.blocks.push(Block::Figure(doc.figure_assets.len() - 1));
        } else if para.is_empty() && CAPTION.is_match(trimmed) {
            doc.captions.push(trimmed.to_string());
            doc.blocks.push(Block::Caption(doc.captions.len() - 1));
        } else {
            para.push(trimmed);
        }
        i += 1;
    }
    flush(&mut doc, &mut para);

    if !saw_refs {
        return Err(malformed("missing references section"));
    }
    let mut keys = BTreeSet::new();
    for r in &doc.references {
        if !keys.insert(r.cite_key.as_str()) {
            return Err(PaperError::MalformedDocument(format!("duplicate reference key `{}`", r.cite_key)));
        }
    }

    let first_title = doc.headings.iter().find(|h| h.level == 1).map(|h| h.text.clone());
    doc.title = front
        .get("title")
        .cloned()
        .or(first_title)
        .ok_or_else(|| malformed("no title"))?;
    doc.id = front.get("id").cloned().unwrap_or_else(|| slug(&doc.title));
    if doc.id.is_empty() {
        return Err(malformed("empty document id"));
    }
    doc.year = front.get("year").and_then(|y| y.parse().ok());
    Ok(doc)
}

impl PaperDocument {
    /// Canonical markdown; `parse_markdown` of the result equals `self`.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("---\n");
        let _ = writeln!(out, "id: {}", self.id);
        let _ = writeln!(out, "title: {}", self.title);
        if let Some(y) = self.year {
            let _ = writeln!(out, "year: {y}");
        }
        out.push_str("---\n");
        for block in &self.blocks {
            out.push('\n');
            match *block {
                Block::Heading(i) => {
                    let h = &self.headings[i];
                    let _ = writeln!(out, "{} {}", "#".repeat(h.level as usize), h.text);
                    if is_references_heading(&h.text) {
                        out.push('\n');
                        for r in &self.references {
                            let _ = writeln!(out, "[{}] {}", r.cite_key, r.text);
                        }
                    }
                }
                Block::Paragraph(i) => {
                    let _ = writeln!(out, "{}", self.paragraphs[i]);
                }
                Block::Equation(i) => {
                    let _ = writeln!(out, "$$\n{}\n$$", self.equations[i].source);
                }
                Block::Algorithm(i) => {
                    let _ = writeln!(out, "```\n{}\n```", self.algorithm_blocks[i]);
                }
                Block::Caption(i) => {
                    let _ = writeln!(out, "{}", self.captions[i]);
                }
                Block::Figure(i) => {
                    let f = &self.figure_assets[i];
                    let _ = writeln!(out, "![{}]({})", self.captions[f.caption], f.path);
                }
            }
        }
        out
    }

    pub fn reference(&self, key: &str) -> Option<&BibEntry> {
        self.references.iter().find(|r| r.cite_key == key)
    }

    /// Top-level sections below the title heading.
    pub fn sections(&self) -> Vec<Section> {
        let level = self.headings.iter().map(|h| h.level).filter(|l| *l > 1).min().unwrap_or(2);
        let starts: Vec<(usize, usize)> = self
            .blocks
            .iter()
            .enumerate()
            .filter_map(|(bi, b)| match b {
                Block::Heading(h) if self.headings[*h].level <= level => Some((bi, *h)),
                _ => None,
            })
            .collect();
        starts
            .iter()
            .enumerate()
            .filter(|(_, (_, h))| self.headings[*h].level == level)
            .map(|(k, (bi, h))| Section {
                heading: *h,
                blocks: *bi..starts.get(k + 1).map(|(b, _)| *b).unwrap_or(self.blocks.len()),
            })
            .collect()
    }

    /// Heading text of the top-level section holding block `bi`.
    pub fn section_of(&self, bi: usize) -> Option<&str> {
        self.sections()
            .into_iter()
            .find(|s| s.blocks.contains(&bi))
            .map(|s| self.headings[s.heading].text.as_str())
    }

    pub fn equation_section(&self, index: usize) -> Option<&str> {
        let bi = self.blocks.iter().position(|b| *b == Block::Equation(index))?;
        self.section_of(bi)
    }

    /// Text of the abstract: the section headed "Abstract", or the
    /// paragraphs before the first top-level section.
    pub fn abstract_text(&self) -> Option<String> {
        let sections = self.sections();
        let range = match sections
            .iter()
            .find(|s| self.headings[s.heading].text.trim().eq_ignore_ascii_case("abstract"))
        {
            Some(s) => s.blocks.clone(),
            None => 0..sections.first().map(|s| s.blocks.start).unwrap_or(self.blocks.len()),
        };
        let paras: Vec<&str> = self.blocks[range]
            .iter()
            .filter_map(|b| match b {
                Block::Paragraph(i) => Some(self.paragraphs[*i].as_str()),
                _ => None,
            })
            .collect();
        (!paras.is_empty()).then(|| paras.join("\n\n"))
    }

    /// Prose outside the abstract, with captions, equations and algorithms.
    pub fn body_text(&self) -> String {
        let abstract_blocks: BTreeSet<usize> = {
            let sections = self.sections();
            match sections
                .iter()
                .find(|s| self.headings[s.heading].text.trim().eq_ignore_ascii_case("abstract"))
            {
                Some(s) => s.blocks.clone().collect(),
                None => (0..sections.first().map(|s| s.blocks.start).unwrap_or(self.blocks.len())).collect(),
            }
        };
        let mut out = String::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            if abstract_blocks.contains(&bi) {
                continue;
            }
            let text = match *b {
                Block::Heading(i) => &self.headings[i].text,
                Block::Paragraph(i) => &self.paragraphs[i],
                Block::Equation(i) => &self.equations[i].source,
                Block::Algorithm(i) => &self.algorithm_blocks[i],
                Block::Caption(i) => &self.captions[i],
                Block::Figure(i) => &self.captions[self.figure_assets[i].caption],
            };
            out.push_str(text);
            out.push('\n');
        }
        out
    }

    /// Full prose text (paragraphs, captions, algorithm blocks) in order.
    pub fn full_text(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            match *b {
                Block::Heading(i) => out.push_str(&self.headings[i].text),
                Block::Paragraph(i) => out.push_str(&self.paragraphs[i]),
                Block::Equation(i) => out.push_str(&self.equations[i].source),
                Block::Algorithm(i) => out.push_str(&self.algorithm_blocks[i]),
                Block::Caption(i) => out.push_str(&self.captions[i]),
                Block::Figure(i) => out.push_str(&self.captions[self.figure_assets[i].caption]),
            }
            out.push('\n');
        }
        out
    }

    /// Bracketed cite keys used in prose that resolve to a reference.
    pub fn cited_keys(&self) -> BTreeSet<String> {
        let known: BTreeSet<&str> = self.references.iter().map(|r| r.cite_key.as_str()).collect();
        let mut out = BTreeSet::new();
        for text in self.paragraphs.iter().chain(&self.captions).chain(&self.algorithm_blocks) {
            for c in CITE.captures_iter(text) {
                for key in c[1].split(',') {
                    if known.contains(key.trim()) {
                        out.insert(key.trim().to_string());
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.to_markdown().len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Copy of the document without the given top-level sections.
    pub fn without_sections(&self, headings: &BTreeSet<usize>) -> PaperDocument {
        let drop: BTreeSet<usize> = self
            .sections()
            .into_iter()
            .filter(|s| headings.contains(&s.heading))
            .flat_map(|s| s.blocks)
            .collect();
        let mut kept = self.clone();
        kept.blocks = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(bi, _)| !drop.contains(bi))
            .map(|(_, b)| *b)
            .collect();
        let keeps_refs = kept
            .blocks
            .iter()
            .any(|b| matches!(b, Block::Heading(h) if is_references_heading(&self.headings[*h].text)));
        if !keeps_refs {
            kept.references.clear();
        }
        parse_markdown(&kept.to_markdown()).expect("canonical markdown reparses")
    }
}
