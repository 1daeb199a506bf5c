//! Context-free grammar over file roles, with per-role interface contracts.
//!
//! A file of role `X` corresponds to one occurrence of nonterminal `X` in a
//! derivation from the start symbol. The start symbol is the left-hand side
//! of the first production and never stands for a file itself.

mod derive;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shape::ShapeSignature;

pub use derive::{
    derive_plan, derive_plan_with, role_snake, Derivability, DerivationPlan, PlanError, PlanNode,
    PlanOptions,
};
pub use validate::{validate_files, validate_repository, ValidationReport, Violation};

pub const DEFAULT_GRAMMAR: &str = include_str!("../../grammar/default.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repeat {
    One,
    Optional,
    Star,
    Plus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub symbol: String,
    pub repeat: Repeat,
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.repeat {
            Repeat::One => write!(f, "{}", self.symbol),
            Repeat::Optional => write!(f, "({})?", self.symbol),
            Repeat::Star => write!(f, "({})*", self.symbol),
            Repeat::Plus => write!(f, "({})+", self.symbol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Item>,
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :=", self.lhs)?;
        for item in &self.rhs {
            write!(f, " {item}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredExport {
    pub name: String,
    pub signature: Option<ShapeSignature>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceContract {
    pub role: String,
    pub required_exports: Vec<RequiredExport>,
    pub allowed_import_roles: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("grammar line {line}: {reason}")]
pub struct GrammarError {
    /// 1-based; 0 for whole-grammar checks.
    pub line: usize,
    pub reason: String,
}

fn gerr(line: usize, reason: impl Into<String>) -> GrammarError {
    GrammarError {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PluginGrammar {
    pub start: String,
    pub nonterminals: BTreeSet<String>,
    pub productions: Vec<Production>,
    pub contracts: BTreeMap<String, InterfaceContract>,
}

impl PluginGrammar {
    pub fn default_grammar() -> Self {
        load_grammar(DEFAULT_GRAMMAR).expect("shipped grammar is valid")
    }

    /// Roles that stand for files: every nonterminal except the start.
    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.nonterminals
            .iter()
            .filter(move |n| **n != self.start)
            .map(String::as_str)
    }

    pub fn is_role(&self, name: &str) -> bool {
        name != self.start && self.nonterminals.contains(name)
    }

    pub fn contract(&self, role: &str) -> Option<&InterfaceContract> {
        self.contracts.get(role)
    }

    pub fn may_import(&self, importer: &str, provider: &str) -> bool {
        self.contracts
            .get(importer)
            .is_some_and(|c| c.allowed_import_roles.contains(provider))
    }
}

fn is_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_item(tok: &str, line: usize) -> Result<Item, GrammarError> {
    let (inner, repeat) = if let Some(rest) = tok.strip_prefix('(') {
        let (inner, mark) = rest
            .rsplit_once(')')
            .ok_or_else(|| gerr(line, format!("unbalanced group `{tok}`")))?;
        let repeat = match mark {
            "?" => Repeat::Optional,
            "*" => Repeat::Star,
            "+" => Repeat::Plus,
            "" => Repeat::One,
            other => return Err(gerr(line, format!("unknown repeat marker `{other}`"))),
        };
        (inner, repeat)
    } else {
        (tok, Repeat::One)
    };
    if !is_symbol(inner) {
        return Err(gerr(line, format!("bad symbol `{inner}`")));
    }
    Ok(Item {
        symbol: inner.to_string(),
        repeat,
    })
}

/// Parse and check a grammar file.
pub fn load_grammar(text: &str) -> Result<PluginGrammar, GrammarError> {
    let mut productions: Vec<(usize, Production)> = Vec::new();
    let mut exports: Vec<(usize, String, RequiredExport)> = Vec::new();
    let mut imports: Vec<(usize, String, Vec<String>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("contract ") {
            let mut parts = rest.trim().splitn(3, char::is_whitespace);
            let role = parts.next().unwrap_or("").to_string();
            let verb = parts.next().unwrap_or("");
            let tail = parts.next().unwrap_or("").trim();
            if !is_symbol(&role) {
                return Err(gerr(line, format!("bad contract role `{role}`")));
            }
            match verb {
                "export" => exports.push((line, role, parse_export(tail, line)?)),
                "import" => imports.push((line, role, tail.split_whitespace().map(str::to_string).collect())),
                other => return Err(gerr(line, format!("unknown contract clause `{other}`"))),
            }
            continue;
        }
        let (lhs, rhs) = body
            .split_once(":=")
            .ok_or_else(|| gerr(line, "expected `LHS := ...` or `contract ...`"))?;
        let lhs = lhs.trim();
        if !is_symbol(lhs) {
            return Err(gerr(line, format!("bad left-hand side `{lhs}`")));
        }
        for alt in rhs.split('|') {
            let items = alt
                .split_whitespace()
                .map(|t| parse_item(t, line))
                .collect::<Result<Vec<_>, _>>()?;
            productions.push((
                line,
                Production {
                    lhs: lhs.to_string(),
                    rhs: items,
                },
            ));
        }
    }

    let Some((_, first)) = productions.first() else {
        return Err(gerr(0, "no productions"));
    };
    let start = first.lhs.clone();
    let nonterminals: BTreeSet<String> = productions.iter().map(|(_, p)| p.lhs.clone()).collect();

    for (line, p) in &productions {
        for item in &p.rhs {
            if !nonterminals.contains(&item.symbol) {
                return Err(gerr(*line, format!("undeclared symbol `{}`", item.symbol)));
            }
            if item.symbol == start {
                return Err(gerr(*line, format!("start symbol `{start}` used on a right-hand side")));
            }
        }
    }

    let mut reachable = BTreeSet::from([start.clone()]);
    let mut frontier = vec![start.clone()];
    while let Some(sym) = frontier.pop() {
        for (_, p) in productions.iter().filter(|(_, p)| p.lhs == sym) {
            for item in &p.rhs {
                if reachable.insert(item.symbol.clone()) {
                    frontier.push(item.symbol.clone());
                }
            }
        }
    }
    if let Some((line, p)) = productions.iter().find(|(_, p)| !reachable.contains(&p.lhs)) {
        return Err(gerr(*line, format!("nonterminal `{}` is unreachable from `{start}`", p.lhs)));
    }

    let mut contracts: BTreeMap<String, InterfaceContract> = nonterminals
        .iter()
        .filter(|n| **n != start)
        .map(|n| {
            (
                n.clone(),
                InterfaceContract {
                    role: n.clone(),
                    ..Default::default()
                },
            )
        })
        .collect();
    for (line, role, export) in exports {
        let c = contracts
            .get_mut(&role)
            .ok_or_else(|| gerr(line, format!("contract for undeclared role `{role}`")))?;
        if c.required_exports.iter().any(|e| e.name == export.name) {
            return Err(gerr(line, format!("duplicate contract export `{role}.{}`", export.name)));
        }
        c.required_exports.push(export);
    }
    let mut seen_imports = BTreeSet::new();
    for (line, role, roles) in imports {
        if !seen_imports.insert(role.clone()) {
            return Err(gerr(line, format!("duplicate import clause for `{role}`")));
        }
        for r in &roles {
            if !nonterminals.contains(r) || *r == start {
                return Err(gerr(line, format!("import of undeclared role `{r}`")));
            }
        }
        let c = contracts
            .get_mut(&role)
            .ok_or_else(|| gerr(line, format!("contract for undeclared role `{role}`")))?;
        c.allowed_import_roles = roles.into_iter().collect();
    }

    // Role-level imports other than self-imports must be acyclic, otherwise
    // no plan could be ordered.
    let role_list: Vec<String> = contracts.keys().cloned().collect();
    let role_edges: BTreeMap<String, BTreeSet<String>> = contracts
        .iter()
        .map(|(r, c)| (r.clone(), c.allowed_import_roles.iter().filter(|x| *x != r).cloned().collect()))
        .collect();
    if let Some((_, cycle)) = crate::repo::find_import_cycle(&role_list, &role_edges) {
        return Err(gerr(0, format!("role import cycle: {}", cycle.join(" -> "))));
    }

    Ok(PluginGrammar {
        start,
        nonterminals,
        productions: productions.into_iter().map(|(_, p)| p).collect(),
        contracts,
    })
}

fn parse_export(tail: &str, line: usize) -> Result<RequiredExport, GrammarError> {
    let name_end = tail
        .find(|c: char| c.is_whitespace() || c == '(')
        .unwrap_or(tail.len());
    let name = &tail[..name_end];
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(gerr(line, format!("bad export name `{name}`")));
    }
    let rest = tail[name_end..].trim();
    let signature = if rest.is_empty() {
        None
    } else {
        let text = if rest.starts_with('(') {
            format!("{name}{rest}")
        } else {
            rest.to_string()
        };
        let sig: ShapeSignature = text.parse().map_err(|e| gerr(line, format!("{e}")))?;
        if sig.name != name {
            return Err(gerr(line, format!("signature names `{}`, expected `{name}`", sig.name)));
        }
        Some(sig)
    };
    Ok(RequiredExport {
        name: name.to_string(),
        signature,
    })
}
