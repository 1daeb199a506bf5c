use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use super::{NodeSpec, SynthError};
use crate::citation::{
    extract_each, normalize_name, CitationGraph, CitationRequirement, ComponentKind, ComponentSpec,
};
use crate::grammar::{derive_plan_with, DerivationPlan, PlanOptions, PluginGrammar};
use crate::llm::{Gateway, LlmRequest};
use crate::paper::{in_lexicon, Block, PaperDocument};
use crate::repo::{module_of, FileId};

static PROPOSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\bwe\s+(?:propose|introduce|present)\s+(?:a|an|the)\s+(?:new\s+|novel\s+)?([a-z0-9][a-z0-9\- ]*?)(?:\s+(?:that|which|to|for|with|in|on|based|where|whose)\b|\s*[,.;:(])",
    )
    .unwrap()
});

const METHOD_WORDS: &[&str] = &["method", "approach"];

/// Output of DAG construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    pub plan: DerivationPlan,
    /// Keyed by plan path.
    pub specs: BTreeMap<String, NodeSpec>,
    /// Method-section equations no node accounts for.
    pub uncovered: Vec<usize>,
}

/// Components the paper itself introduces: `we propose a <name> ...`
/// where the name ends in a technical head noun.
fn own_component_names(doc: &PaperDocument) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for p in &doc.paragraphs {
        for c in PROPOSE.captures_iter(p) {
            let name = c[1].trim().to_lowercase();
            let head = name.split_whitespace().last().unwrap_or("");
            if name.split_whitespace().count() >= 2 && in_lexicon(head) && !out.iter().any(|(n, _)| *n == name) {
                out.push((name, c[0].to_string()));
            }
        }
    }
    out
}

fn gateway_own_components(doc: &PaperDocument, gateway: &Gateway) -> Vec<(String, String)> {
    if !gateway.is_available() {
        return Vec::new();
    }
    let schema = json!({
        "type": "object",
        "required": ["components"],
        "properties": {"components": {"type": "array", "items": {
            "type": "object", "required": ["name", "evidence"],
            "properties": {"name": {"type": "string"}, "evidence": {"type": "string"}}
        }}}
    });
    let req = LlmRequest::new("components", gateway.model_for("components"))
        .system("List the technical components this paper introduces itself. For each give a short name and a verbatim evidence sentence.")
        .user(doc.full_text())
        .with_schema(schema);
    let Ok(resp) = gateway.complete_structured(&req) else {
        return Vec::new();
    };
    let text = doc.full_text();
    resp.structured
        .as_ref()
        .and_then(|v| v["components"].as_array())
        .into_iter()
        .flatten()
        .filter_map(|c| {
            let name = c["name"].as_str()?.trim().to_lowercase();
            let evidence = c["evidence"].as_str()?.trim().to_string();
            (!name.is_empty() && text.contains(&evidence)).then_some((name, evidence))
        })
        .collect()
}

fn in_method_scope(heading: Option<&str>) -> bool {
    heading.is_some_and(|h| {
        let h = h.to_lowercase();
        METHOD_WORDS.iter().any(|w| h.contains(w))
    })
}

/// Map the paper and its resolved citations onto a derivation plan and one
/// work order per file.
pub fn construct_dag(
    doc: &PaperDocument,
    graph: &CitationGraph,
    grammar: &PluginGrammar,
    gateway: &Gateway,
    package: &str,
) -> Result<Dag, SynthError> {
    let mut components: Vec<ComponentSpec> = graph.direct_components().into_iter().cloned().collect();

    let mut own = own_component_names(doc);
    for (name, evidence) in gateway_own_components(doc, gateway) {
        if !own.iter().any(|(n, _)| normalize_name(n) == normalize_name(&name)) {
            own.push((name, evidence));
        }
    }
    for (name, evidence) in own {
        let req = CitationRequirement {
            source_key: doc.id.clone(),
            borrowed: vec![name],
            evidence,
        };
        for (_, spec) in extract_each(doc, &req, gateway) {
            if let Ok(spec) = spec {
                components.push(spec);
            }
        }
    }

    let mut seen = BTreeSet::new();
    components.retain(|c| seen.insert(normalize_name(&c.name)));
    if let Some(c) = components.iter().find(|c| matches!(c.kind, ComponentKind::Unknown(_))) {
        return Err(SynthError::UnassignedComponent(c.name.clone()));
    }

    let outline: String = doc
        .headings
        .iter()
        .map(|h| h.text.as_str())
        .chain(doc.paragraphs.iter().map(String::as_str))
        .collect::<Vec<_>>()
        .join("\n");
    let opts = PlanOptions {
        package: package.to_string(),
        separate_losses: true,
    };
    let plan = derive_plan_with(grammar, &components, &outline, &opts)?;

    let mut specs: BTreeMap<String, NodeSpec> = plan
        .nodes
        .iter()
        .map(|n| {
            let spec = NodeSpec {
                file: FileId(module_of(&n.path).unwrap_or_else(|| n.path.clone())),
                path: n.path.clone(),
                role: n.role.clone(),
                components: Vec::new(),
                excerpts: Vec::new(),
                equations: Vec::new(),
                exemplars: Vec::new(),
            };
            (n.path.clone(), spec)
        })
        .collect();
    for c in &components {
        let node = plan
            .node_for_component(&c.name)
            .ok_or_else(|| SynthError::UnassignedComponent(c.name.clone()))?;
        let spec = specs.get_mut(&node.path).expect("spec per node");
        spec.excerpts.push(c.excerpt.clone());
        for e in &c.equations {
            if !spec.equations.contains(e) {
                spec.equations.push(e.clone());
            }
        }
        spec.components.push(c.clone());
    }

    let covered: BTreeSet<&str> = specs
        .values()
        .flat_map(|s| s.equations.iter().map(|e| e.source.as_str()))
        .collect();
    let uncovered = doc
        .blocks
        .iter()
        .enumerate()
        .filter_map(|(bi, b)| match b {
            Block::Equation(e) if in_method_scope(doc.section_of(bi)) => Some(*e),
            _ => None,
        })
        .filter(|e| !covered.contains(doc.equations[*e].source.as_str()))
        .collect();

    Ok(Dag { plan, specs, uncovered })
}
