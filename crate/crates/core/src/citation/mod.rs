//! Citation dependency graph: which cited papers contribute components to
//! a target paper, resolved transitively until every borrowed component
//! has been extracted or marked unresolvable.

mod resolve;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::llm::{Gateway, LlmRequest};
use crate::paper::{Block, Equation, PaperDocument};

pub use resolve::{
    is_resolved, resolve_transitive, CitationGraph, FetchError, FixtureFetcher, NodeState, ResolveOptions,
    WebFetcher,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CitationError {
    #[error("component `{0}` not found in provider paper")]
    ComponentNotFound(String),
    #[error("citation expansion exceeded {0} hops at `{1}`")]
    DepthExceeded(usize, String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentKind {
    Module,
    Loss,
    Protocol,
    /// A kind label outside the three-way taxonomy, kept verbatim.
    Unknown(String),
}

impl ComponentKind {
    pub fn as_str(&self) -> &str {
        match self {
            ComponentKind::Module => "architectural-module",
            ComponentKind::Loss => "loss-function",
            ComponentKind::Protocol => "training-protocol",
            ComponentKind::Unknown(s) => s,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s {
            "architectural-module" => ComponentKind::Module,
            "loss-function" => ComponentKind::Loss,
            "training-protocol" => ComponentKind::Protocol,
            other => ComponentKind::Unknown(other.to_string()),
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ComponentKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ComponentKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(ComponentKind::parse(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRequirement {
    pub source_key: String,
    pub borrowed: Vec<String>,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub kind: ComponentKind,
    pub name: String,
    /// Paper the component was extracted from.
    pub source_key: String,
    pub equations: Vec<Equation>,
    pub excerpt: String,
}

/// Lowercase, hyphens as spaces, whitespace collapsed.
pub fn normalize_name(name: &str) -> String {
    name.to_lowercase()
        .replace('-', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn stem(word: &str) -> &str {
    for suf in ["ings", "ing", "ers", "er", "ions", "ion", "es", "ed", "s"] {
        if let Some(base) = word.strip_suffix(suf) {
            if base.len() >= 3 {
                return base;
            }
        }
    }
    word
}

fn stems(text: &str) -> Vec<String> {
    normalize_name(text)
        .split(|c: char| !c.is_ascii_alphanumeric() && c != ' ')
        .flat_map(|s| s.split_whitespace())
        .map(|w| stem(w).to_string())
        .collect()
}

/// Whether `name` occurs in `text` up to case, hyphenation and suffixes.
pub fn mentions(text: &str, name: &str) -> bool {
    let needle = stems(name);
    if needle.is_empty() {
        return false;
    }
    let hay = stems(text);
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

const LOSS_WORDS: &[&str] = &["loss", "regulariz", "penalty"];
const PROTOCOL_WORDS: &[&str] = &[
    "sampling",
    "schedule",
    "training",
    "protocol",
    "optimization",
    "stop gradient",
    "annealing",
    "warmup",
    "warm up",
    "curriculum",
];

pub fn classify(name: &str) -> ComponentKind {
    let n = normalize_name(name);
    if LOSS_WORDS.iter().any(|w| n.contains(w)) {
        ComponentKind::Loss
    } else if PROTOCOL_WORDS.iter().any(|w| n.contains(w)) {
        ComponentKind::Protocol
    } else {
        ComponentKind::Module
    }
}

/// Sentences of a paragraph as verbatim slices.
pub(crate) fn sentences(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..bytes.len() {
        let end_mark = matches!(bytes[i], b'.' | b'!' | b'?');
        let next_ws = bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace());
        if end_mark && next_ws {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

static CITE_AFTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(of|from)\s+\[([A-Za-z0-9_:\-]+(?:\s*,\s*[A-Za-z0-9_:\-]+)*)\]").unwrap());
static WE_VERB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\bwe\s+(?:use|adopt|follow|employ)\s+(?:the\s+|a\s+|an\s+)?([A-Za-z0-9][A-Za-z0-9 \-]*?)\s*(?:\(|,)?\s*(?:(?:from|of|in|proposed in|introduced in|as in)\s+)?\[([A-Za-z0-9_:\-]+(?:\s*,\s*[A-Za-z0-9_:\-]+)*)\]",
    )
    .unwrap()
});

const ARTICLES: &[&str] = &["the", "a", "an"];
const STOP: &[&str] = &[
    "the", "a", "an", "of", "from", "and", "or", "with", "in", "on", "to", "for", "we", "our", "is", "are", "by",
    "as", "that", "this", "which", "use", "adopt", "follow", "employ",
];

/// `the|a <component> (of|from) [key]`: walk back from `of`/`from` to the
/// nearest article within five words.
fn article_phrase(before: &str) -> Option<String> {
    let words: Vec<&str> = before.split_whitespace().collect();
    let mut phrase = Vec::new();
    for w in words.iter().rev().take(6) {
        let lw = w.to_lowercase();
        if ARTICLES.contains(&lw.as_str()) {
            if phrase.is_empty() {
                return None;
            }
            phrase.reverse();
            return Some(phrase.join(" "));
        }
        if STOP.contains(&lw.as_str()) || !w.chars().all(|c| c.is_alphanumeric() || c == '-') {
            return None;
        }
        phrase.push(*w);
    }
    None
}

fn keys_of(list: &str) -> Vec<String> {
    list.split(',').map(|k| k.trim().to_string()).filter(|k| !k.is_empty()).collect()
}

/// Pattern-tier borrowings: `(key, component, evidence sentence)`.
pub fn pattern_borrowings(doc: &PaperDocument) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for text in &doc.paragraphs {
        for sentence in sentences(text) {
            for c in CITE_AFTER.captures_iter(sentence) {
                let m = c.get(0).expect("whole match");
                if let Some(name) = article_phrase(&sentence[..m.start()]) {
                    for k in keys_of(&c[2]) {
                        out.push((k, name.clone(), sentence.to_string()));
                    }
                }
            }
            for c in WE_VERB.captures_iter(sentence) {
                let name = c[1].trim();
                let words: Vec<&str> = name.split_whitespace().collect();
                if words.is_empty() || words.len() > 6 {
                    continue;
                }
                for k in keys_of(&c[2]) {
                    out.push((k, name.to_string(), sentence.to_string()));
                }
            }
        }
    }
    out
}

fn discovery_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "required": ["requirements"],
        "properties": {
            "requirements": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["key", "components", "evidence"],
                    "properties": {
                        "key": {"type": "string"},
                        "components": {"type": "array", "items": {"type": "string"}},
                        "evidence": {"type": "string"}
                    }
                }
            }
        }
    })
}

fn gateway_borrowings(doc: &PaperDocument, gateway: &Gateway) -> Vec<(String, String, String)> {
    if !gateway.is_available() {
        return Vec::new();
    }
    let refs: Vec<String> = doc.references.iter().map(|r| format!("[{}] {}", r.cite_key, r.title)).collect();
    let req = LlmRequest::new("discover", gateway.model_for("discover"))
        .system("List the components (architectural modules, loss functions, training protocols) that the paper borrows from cited work. Quote the sentence that shows each borrowing.")
        .user(format!("References:\n{}\n\nPaper:\n{}", refs.join("\n"), doc.full_text()))
        .with_schema(discovery_schema());
    let Ok(resp) = gateway.complete_structured(&req) else {
        return Vec::new();
    };
    let full = doc.full_text();
    let mut out = Vec::new();
    for r in resp.structured.as_ref().and_then(|v| v["requirements"].as_array()).into_iter().flatten() {
        let (Some(key), Some(evidence)) = (r["key"].as_str(), r["evidence"].as_str()) else {
            continue;
        };
        if evidence.trim().is_empty() || !full.contains(evidence) {
            continue;
        }
        for c in r["components"].as_array().into_iter().flatten().filter_map(|c| c.as_str()) {
            out.push((key.to_string(), c.to_string(), evidence.to_string()));
        }
    }
    out
}

/// Borrowed components per cited key: pattern tier unioned with the
/// gateway tier. Only keys present in the bibliography are kept.
pub fn discover_dependencies(doc: &PaperDocument, gateway: &Gateway) -> Vec<CitationRequirement> {
    let mut by_key: BTreeMap<String, CitationRequirement> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let found = pattern_borrowings(doc).into_iter().chain(gateway_borrowings(doc, gateway));
    for (key, name, evidence) in found {
        if doc.reference(&key).is_none() {
            continue;
        }
        let entry = by_key.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            CitationRequirement {
                source_key: key.clone(),
                borrowed: Vec::new(),
                evidence,
            }
        });
        let norm = normalize_name(&name);
        if !entry.borrowed.iter().any(|b| normalize_name(b) == norm) {
            entry.borrowed.push(name);
        }
    }
    order.into_iter().map(|k| by_key.remove(&k).expect("ordered key")).collect()
}

/// Locate one borrowed component in its provider paper.
/// The first mention followed by equations in its section wins; otherwise
/// the first mention.
fn locate(provider: &PaperDocument, name: &str) -> Option<ComponentSpec> {
    let mut first: Option<ComponentSpec> = None;
    for (bi, block) in provider.blocks.iter().enumerate() {
        let Block::Paragraph(pi) = block else {
            continue;
        };
        let para = &provider.paragraphs[*pi];
        let Some(sentence) = sentences(para).into_iter().find(|s| mentions(s, name)) else {
            continue;
        };
        let section = provider.section_of(bi);
        let equations: Vec<_> = provider
            .blocks
            .iter()
            .enumerate()
            .filter_map(|(bj, b)| match b {
                Block::Equation(e) if provider.section_of(bj) == section && bj > bi => Some((bj, *e)),
                _ => None,
            })
            .take_while(|(bj, _)| {
                // Stop at the next paragraph that does not mention the component.
                !provider.blocks[bi + 1..*bj].iter().any(|b| match b {
                    Block::Paragraph(p) => !mentions(&provider.paragraphs[*p], name),
                    _ => false,
                })
            })
            .map(|(_, e)| provider.equations[e].clone())
            .collect();
        let spec = ComponentSpec {
            kind: classify(name),
            name: name.to_string(),
            source_key: provider.id.clone(),
            excerpt: sentence.to_string(),
            equations,
        };
        if !spec.equations.is_empty() {
            return Some(spec);
        }
        first.get_or_insert(spec);
    }
    first
}

fn gateway_locate(provider: &PaperDocument, name: &str, gateway: &Gateway) -> Option<ComponentSpec> {
    if !gateway.is_available() {
        return None;
    }
    let req = LlmRequest::new(format!("extract:{}", provider.id), gateway.model_for("extract"))
        .system("Quote verbatim the passage of the paper that defines the named component, and classify it.")
        .user(format!("Component: {name}\n\nPaper:\n{}", provider.full_text()))
        .with_schema(json!({
            "type": "object",
            "required": ["excerpt", "kind"],
            "properties": {
                "excerpt": {"type": "string"},
                "kind": {"type": "string", "enum": ["architectural-module", "loss-function", "training-protocol"]}
            }
        }));
    let v = gateway.complete_structured(&req).ok()?.structured?;
    let excerpt = v["excerpt"].as_str()?.trim().to_string();
    if excerpt.is_empty() || !provider.full_text().contains(&excerpt) {
        return None;
    }
    Some(ComponentSpec {
        kind: ComponentKind::parse(v["kind"].as_str()?),
        name: name.to_string(),
        source_key: provider.id.clone(),
        equations: Vec::new(),
        excerpt,
    })
}

/// One result per borrowed name.
pub fn extract_each(
    provider: &PaperDocument,
    req: &CitationRequirement,
    gateway: &Gateway,
) -> Vec<(String, Result<ComponentSpec, CitationError>)> {
    req.borrowed
        .iter()
        .map(|name| {
            let spec = locate(provider, name)
                .or_else(|| gateway_locate(provider, name, gateway))
                .ok_or_else(|| CitationError::ComponentNotFound(name.clone()));
            (name.clone(), spec)
        })
        .collect()
}

pub fn extract_components(
    provider: &PaperDocument,
    req: &CitationRequirement,
    gateway: &Gateway,
) -> Result<Vec<ComponentSpec>, CitationError> {
    extract_each(provider, req, gateway).into_iter().map(|(_, r)| r).collect()
}
