use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PluginGrammar, Repeat};
use crate::citation::{ComponentKind, ComponentSpec};

type Vector = Vec<u16>;
type Children = Vec<(usize, Vector)>;

/// Exhaustive derivability check for role multisets.
///
/// For a target multiset `M` the engine computes, per nonterminal, every
/// count vector `v <= M` (componentwise) that some derivation rooted at that
/// nonterminal can produce, iterating to a fixpoint. Repetition is bounded
/// implicitly by `M`, so the search is finite for any grammar.
pub struct Derivability<'g> {
    grammar: &'g PluginGrammar,
    symbols: Vec<String>,
    index: BTreeMap<String, usize>,
}

struct Table {
    /// Per symbol: reachable vector -> (production index, child instances).
    inst: Vec<BTreeMap<Vector, (usize, Children)>>,
}

impl<'g> Derivability<'g> {
    pub fn new(grammar: &'g PluginGrammar) -> Self {
        let symbols: Vec<String> = grammar.nonterminals.iter().cloned().collect();
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Derivability {
            grammar,
            symbols,
            index,
        }
    }

    /// If `counts` (role -> number of files) is derivable from the start
    /// symbol, the productions used by one witness derivation, in first-use
    /// order. Unknown roles are never derivable.
    pub fn derivation(&self, counts: &BTreeMap<String, usize>) -> Option<Vec<String>> {
        let mut target = vec![0u16; self.symbols.len()];
        for (role, n) in counts {
            if *n == 0 {
                continue;
            }
            if !self.grammar.is_role(role) {
                return None;
            }
            target[self.index[role]] = u16::try_from(*n).ok()?;
        }
        let table = self.solve(&target);
        let start = self.index[&self.grammar.start];
        table.inst[start].get(&target)?;
        let mut trace = Vec::new();
        self.collect_trace(&table, start, &target, &mut trace);
        Some(trace)
    }

    pub fn is_derivable(&self, counts: &BTreeMap<String, usize>) -> bool {
        self.derivation(counts).is_some()
    }

    fn collect_trace(&self, table: &Table, sym: usize, v: &Vector, out: &mut Vec<String>) {
        let (prod, children) = &table.inst[sym][v];
        let text = self.grammar.productions[*prod].to_string();
        if !out.contains(&text) {
            out.push(text);
        }
        for (s, cv) in children {
            self.collect_trace(table, *s, cv, out);
        }
    }

    fn solve(&self, target: &Vector) -> Table {
        let n = self.symbols.len();
        let start = self.index[&self.grammar.start];
        let mut table = Table {
            inst: vec![BTreeMap::new(); n],
        };
        let fits = |v: &Vector| v.iter().zip(target).all(|(a, b)| a <= b);
        loop {
            let mut changed = false;
            for (pi, prod) in self.grammar.productions.iter().enumerate() {
                let lhs = self.index[&prod.lhs];
                let mut seq: BTreeMap<Vector, Children> = BTreeMap::from([(vec![0; n], Vec::new())]);
                for item in &prod.rhs {
                    let sym = self.index[&item.symbol];
                    let single: Vec<(Vector, Children)> = table.inst[sym]
                        .keys()
                        .map(|v| (v.clone(), vec![(sym, v.clone())]))
                        .collect();
                    let options: BTreeMap<Vector, Children> = match item.repeat {
                        Repeat::One => single.into_iter().collect(),
                        Repeat::Optional => {
                            let mut m: BTreeMap<Vector, Children> = BTreeMap::from([(vec![0; n], Vec::new())]);
                            for (v, c) in single {
                                m.entry(v).or_insert(c);
                            }
                            m
                        }
                        Repeat::Star | Repeat::Plus => {
                            let mut closure: BTreeMap<Vector, Children> =
                                BTreeMap::from([(vec![0; n], Vec::new())]);
                            loop {
                                let next = sum(&closure, &single, &fits);
                                let before = closure.len();
                                for (v, c) in next {
                                    closure.entry(v).or_insert(c);
                                }
                                if closure.len() == before {
                                    break;
                                }
                            }
                            if item.repeat == Repeat::Plus {
                                sum(&closure, &single, &fits)
                            } else {
                                closure
                            }
                        }
                    };
                    seq = sum(&seq, &options.into_iter().collect::<Vec<_>>(), &fits);
                }
                for (mut v, children) in seq {
                    if lhs != start {
                        v[lhs] += 1;
                        if !fits(&v) {
                            continue;
                        }
                    }
                    if let std::collections::btree_map::Entry::Vacant(e) = table.inst[lhs].entry(v) {
                        e.insert((pi, children));
                        changed = true;
                    }
                }
            }
            if !changed {
                return table;
            }
        }
    }
}

fn sum(
    left: &BTreeMap<Vector, Children>,
    right: &[(Vector, Children)],
    fits: &impl Fn(&Vector) -> bool,
) -> BTreeMap<Vector, Children> {
    let mut out: BTreeMap<Vector, Children> = BTreeMap::new();
    for (a, ca) in left {
        for (b, cb) in right {
            let v: Vector = a.iter().zip(b).map(|(x, y)| x + y).collect();
            if fits(&v) && !out.contains_key(&v) {
                let mut c = ca.clone();
                c.extend(cb.iter().cloned());
                out.insert(v, c);
            }
        }
    }
    out
}

/// `DataManager` -> `data_manager`.
pub fn role_snake(role: &str) -> String {
    let mut out = String::new();
    for (i, ch) in role.chars().enumerate() {
        if ch.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub role: String,
    pub path: String,
    /// Names of the components this node realizes.
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationPlan {
    pub package: String,
    pub nodes: Vec<PlanNode>,
    /// `(provider path, dependent path)`.
    pub edges: Vec<(String, String)>,
    pub trace: Vec<String>,
}

impl DerivationPlan {
    pub fn role_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for n in &self.nodes {
            *counts.entry(n.role.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn roles(&self) -> BTreeSet<&str> {
        self.nodes.iter().map(|n| n.role.as_str()).collect()
    }

    pub fn node(&self, path: &str) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.path == path)
    }

    pub fn node_for_role(&self, role: &str) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.role == role)
    }

    pub fn node_for_component(&self, name: &str) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.components.iter().any(|c| c == name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no derivation: {0}")]
    NoDerivation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOptions {
    pub package: String,
    /// Give loss functions their own `Loss` node instead of folding them
    /// into the model's loss dictionary.
    pub separate_losses: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            package: "method".into(),
            separate_losses: false,
        }
    }
}

const ENCODER_WORDS: &[&str] = &[
    "encod", "hash", "grid", "plane", "positional", "fourier", "embedding", "factoriz", "decomposition",
    "appearance",
];
const SAMPLER_WORDS: &[&str] = &["sampler", "sampling", "proposal"];

/// Role an architectural module lands in, by keyword.
fn module_role(name: &str) -> &'static str {
    let n = name.to_lowercase();
    if SAMPLER_WORDS.iter().any(|w| n.contains(w)) {
        "Sampler"
    } else if ENCODER_WORDS.iter().any(|w| n.contains(w)) {
        "Encoder"
    } else {
        "Field"
    }
}

/// Map a component mix onto grammar roles with default options.
pub fn derive_plan(
    grammar: &PluginGrammar,
    components: &[ComponentSpec],
    outline: &str,
) -> Result<DerivationPlan, PlanError> {
    derive_plan_with(grammar, components, outline, &PlanOptions::default())
}

pub fn derive_plan_with(
    grammar: &PluginGrammar,
    components: &[ComponentSpec],
    outline: &str,
    opts: &PlanOptions,
) -> Result<DerivationPlan, PlanError> {
    let mut by_role: BTreeMap<&str, Vec<String>> = ["Config", "DataManager", "Model", "Pipeline"]
        .into_iter()
        .map(|r| (r, Vec::new()))
        .collect();
    for c in components {
        let role = match &c.kind {
            ComponentKind::Module => module_role(&c.name),
            ComponentKind::Loss if opts.separate_losses => "Loss",
            ComponentKind::Loss | ComponentKind::Protocol => "Model",
            ComponentKind::Unknown(k) => {
                return Err(PlanError::NoDerivation(format!(
                    "component `{}` has kind `{k}` outside the taxonomy",
                    c.name
                )))
            }
        };
        let names = by_role.entry(role).or_default();
        if !names.contains(&c.name) {
            names.push(c.name.clone());
        }
    }
    if by_role.contains_key("Encoder") || by_role.contains_key("Sampler") {
        by_role.entry("Field").or_default();
    }
    let lower = outline.to_lowercase();
    if ["dataparser", "data parser", "dataset format"].iter().any(|w| lower.contains(w)) {
        by_role.entry("DataParser").or_default();
    }
    for role in by_role.keys() {
        if !grammar.is_role(role) {
            return Err(PlanError::NoDerivation(format!("grammar has no role `{role}`")));
        }
    }

    let mut nodes: Vec<PlanNode> = by_role
        .into_iter()
        .map(|(role, components)| PlanNode {
            role: role.to_string(),
            path: format!("{}/{}.py", opts.package, role_snake(role)),
            components,
        })
        .collect();
    nodes.sort_by(|a, b| a.path.cmp(&b.path));

    let mut edges = Vec::new();
    for d in &nodes {
        for p in &nodes {
            if p.role != d.role && grammar.may_import(&d.role, &p.role) {
                edges.push((p.path.clone(), d.path.clone()));
            }
        }
    }
    edges.sort();

    let mut plan = DerivationPlan {
        package: opts.package.clone(),
        nodes,
        edges,
        trace: Vec::new(),
    };
    plan.trace = Derivability::new(grammar)
        .derivation(&plan.role_counts())
        .ok_or_else(|| PlanError::NoDerivation(format!("roles {:?} are not derivable", plan.role_counts())))?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::load_grammar;

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(r, n)| (r.to_string(), *n)).collect()
    }

    fn spec(kind: ComponentKind, name: &str) -> ComponentSpec {
        ComponentSpec {
            kind,
            name: name.into(),
            source_key: "x".into(),
            equations: Vec::new(),
            excerpt: name.into(),
        }
    }

    #[test]
    fn minimal_skeleton_is_derivable() {
        let g = PluginGrammar::default_grammar();
        let d = Derivability::new(&g);
        let trace = d
            .derivation(&counts(&[("Config", 1), ("DataManager", 1), ("Model", 1), ("Pipeline", 1)]))
            .unwrap();
        assert!(trace[0].starts_with("Plugin :="));
        assert!(!d.is_derivable(&counts(&[("Config", 1), ("Model", 1), ("Pipeline", 1)])));
        assert!(!d.is_derivable(&counts(&[
            ("Config", 1),
            ("DataManager", 1),
            ("Model", 1),
            ("Pipeline", 2)
        ])));
        assert!(d.is_derivable(&counts(&[
            ("Config", 1),
            ("DataManager", 1),
            ("Model", 1),
            ("Pipeline", 1),
            ("Encoder", 3),
            ("Field", 1),
        ])));
        assert!(!d.is_derivable(&counts(&[("Renderer", 1)])));
    }

    #[test]
    fn recursive_grammar_terminates() {
        let g = load_grammar("S := A\nA := B (A)?\nB :=\n").unwrap();
        let d = Derivability::new(&g);
        assert!(d.is_derivable(&counts(&[("A", 3), ("B", 3)])));
        assert!(!d.is_derivable(&counts(&[("A", 3), ("B", 2)])));
    }

    #[test]
    fn plan_for_encoder_sampler_and_loss() {
        let g = PluginGrammar::default_grammar();
        let comps = [
            spec(ComponentKind::Module, "hash encoder"),
            spec(ComponentKind::Module, "proposal sampler"),
            spec(ComponentKind::Loss, "distortion loss"),
        ];
        let plan = derive_plan(&g, &comps, "").unwrap();
        let roles: Vec<&str> = plan.roles().into_iter().collect();
        assert_eq!(
            roles,
            vec!["Config", "DataManager", "Encoder", "Field", "Model", "Pipeline", "Sampler"]
        );
        assert_eq!(plan.node_for_component("distortion loss").unwrap().role, "Model");

        let opts = PlanOptions {
            separate_losses: true,
            ..Default::default()
        };
        let plan = derive_plan_with(&g, &comps, "", &opts).unwrap();
        assert_eq!(plan.node_for_component("distortion loss").unwrap().path, "method/loss.py");
    }

    #[test]
    fn empty_components_give_minimal_plan() {
        let g = PluginGrammar::default_grammar();
        let plan = derive_plan(&g, &[], "").unwrap();
        let roles: Vec<&str> = plan.roles().into_iter().collect();
        assert_eq!(roles, vec!["Config", "DataManager", "Model", "Pipeline"]);
        assert!(plan.edges.contains(&("method/config.py".into(), "method/model.py".into())));
        assert!(!plan.edges.contains(&("method/model.py".into(), "method/config.py".into())));
    }

    #[test]
    fn unknown_kind_has_no_derivation() {
        let g = PluginGrammar::default_grammar();
        let err = derive_plan(&g, &[spec(ComponentKind::Unknown("dataset".into()), "x")], "").unwrap_err();
        assert!(matches!(err, PlanError::NoDerivation(_)));
    }

    #[test]
    fn snake_case_roles() {
        assert_eq!(role_snake("DataManager"), "data_manager");
        assert_eq!(role_snake("Config"), "config");
    }
}
