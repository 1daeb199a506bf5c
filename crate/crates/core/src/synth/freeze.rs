use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::LazyLock;

use serde_json::{json, Value};

use super::{ExportDecl, FrozenInterface, NodeSpec, SynthError, SynthesisState};
use crate::grammar::role_snake;
use crate::llm::{Gateway, LlmError, LlmRequest};
use crate::shape::{unify_shapes, ShapeSignature};

const FREEZE_PROMPT: &str = "You design the public interface of one file in a radiance-field method plugin. \
Declare the names the file exports, with a shape signature where tensors cross the boundary, \
and the names it imports from files that are already frozen. Reply with JSON only.";

static FREEZE_SCHEMA: LazyLock<Value> = LazyLock::new(|| {
    json!({
        "type": "object",
        "required": ["exports", "imports"],
        "properties": {
            "exports": {"type": "array", "items": {
                "type": "object", "required": ["name"],
                "properties": {"name": {"type": "string"}, "signature": {"type": ["string", "null"]}}
            }},
            "imports": {"type": "array", "items": {
                "type": "object", "required": ["name", "from"],
                "properties": {"name": {"type": "string"}, "from": {"type": "string"}}
            }}
        }
    })
});

pub(super) fn describe_spec(out: &mut String, spec: &NodeSpec) {
    if spec.components.is_empty() {
        out.push_str("Components: none\n");
    } else {
        out.push_str("Components:\n");
        for c in &spec.components {
            let _ = writeln!(out, "- {} ({}, from {}): {}", c.name, c.kind, c.source_key, c.excerpt);
        }
    }
    for e in &spec.equations {
        let _ = writeln!(out, "Equation: {}", e.source);
    }
}

pub(super) fn describe_interfaces(out: &mut String, state: &SynthesisState, paths: &BTreeSet<String>) {
    for p in paths {
        let Some(iface) = state.interfaces.get(p) else {
            continue;
        };
        let _ = writeln!(out, "{p}:");
        for e in &iface.exports {
            match &e.signature {
                Some(s) => {
                    let _ = writeln!(out, "  export {} {s}", e.name);
                }
                None => {
                    let _ = writeln!(out, "  export {}", e.name);
                }
            }
        }
    }
}

fn context(state: &SynthesisState, path: &str) -> String {
    let spec = &state.specs[path];
    let mut out = String::new();
    let _ = writeln!(out, "File: {path}\nRole: {}", spec.role);
    if let Some(c) = state.grammar.contract(&spec.role) {
        for r in &c.required_exports {
            match &r.signature {
                Some(s) => {
                    let _ = writeln!(out, "Required export: {} {s}", r.name);
                }
                None => {
                    let _ = writeln!(out, "Required export: {}", r.name);
                }
            }
        }
        let roles: Vec<&str> = c.allowed_import_roles.iter().map(String::as_str).collect();
        let _ = writeln!(out, "May import roles: {}", roles.join(", "));
    }
    describe_spec(&mut out, spec);
    let ancestors = state.ancestors(path);
    if !ancestors.is_empty() {
        out.push_str("Frozen ancestors:\n");
        describe_interfaces(&mut out, state, &ancestors);
    }
    out.push_str("Reply as {\"exports\": [{\"name\", \"signature\"}], \"imports\": [{\"name\", \"from\"}]}.");
    out
}

/// Contract violations of a proposed interface for `path`.
pub fn check_interface(state: &SynthesisState, path: &str, iface: &FrozenInterface) -> Vec<String> {
    let mut out = Vec::new();
    let Some(role) = state.role_of(path) else {
        return vec![format!("`{path}` is not a plan node")];
    };
    let mut names = BTreeSet::new();
    for e in &iface.exports {
        if !names.insert(e.name.as_str()) {
            out.push(format!("export `{}` is declared twice", e.name));
        }
        if let Some(sig) = &e.signature {
            if let Err(err) = sig.parse::<ShapeSignature>() {
                out.push(format!("export `{}` has an unreadable signature: {err}", e.name));
            }
        }
    }
    if let Some(contract) = state.grammar.contract(role) {
        for req in &contract.required_exports {
            let Some(decl) = iface.exports.iter().find(|e| e.name == req.name) else {
                out.push(format!("{role} must export `{}`", req.name));
                continue;
            };
            let Some(want) = &req.signature else {
                continue;
            };
            match decl.signature.as_deref().map(str::parse::<ShapeSignature>) {
                None => out.push(format!("`{}` must declare signature `{want}`", req.name)),
                Some(Ok(got)) => {
                    if let Err(m) = unify_shapes(want, &got) {
                        out.push(format!("`{}`: declared `{got}` does not match `{want}`: {m}", req.name));
                    }
                }
                Some(Err(_)) => {}
            }
        }
    }
    let ancestors = state.ancestors(path);
    for imp in &iface.imports {
        if !ancestors.contains(&imp.from) {
            out.push(format!("`{}` is imported from `{}`, which is not an ancestor", imp.name, imp.from));
            continue;
        }
        let provider_role = state.role_of(&imp.from).unwrap_or("");
        if !state.grammar.may_import(role, provider_role) {
            out.push(format!("{role} may not import from {provider_role}"));
        }
        match state.interfaces.get(&imp.from) {
            Some(p) if p.frozen && p.exports_name(&imp.name) => {}
            Some(p) if p.frozen => out.push(format!("`{}` does not export `{}`", imp.from, imp.name)),
            _ => out.push(format!("`{}` is not frozen yet", imp.from)),
        }
    }
    out
}

fn parse_interface(v: &Value) -> Result<FrozenInterface, String> {
    serde_json::from_value(v.clone()).map_err(|e| e.to_string())
}

/// Freeze every interface in topological order, reprompting with the
/// violations until the attempt budget runs out.
pub fn freeze_interfaces(state: &mut SynthesisState, gateway: &Gateway) -> Result<(), SynthError> {
    for path in state.order() {
        let role = state.specs[&path].role.clone();
        let mut req = LlmRequest::new(format!("freeze:{}", role_snake(&role)), gateway.model_for("freeze"))
            .system(FREEZE_PROMPT)
            .user(context(state, &path))
            .with_schema(FREEZE_SCHEMA.clone())
            .with_temperature(0.0);
        let mut violations = Vec::new();
        let mut accepted = None;
        for attempt in 1..=state.budgets.freeze {
            *state.attempts.entry(format!("freeze:{path}")).or_insert(0) = attempt;
            let (reply, found) = match gateway.complete_structured(&req) {
                Ok(resp) => {
                    let value = resp.structured.expect("schema set");
                    match parse_interface(&value) {
                        Ok(iface) => {
                            let v = check_interface(state, &path, &iface);
                            if v.is_empty() {
                                accepted = Some(iface);
                                break;
                            }
                            (resp.text, v)
                        }
                        Err(e) => (resp.text, vec![format!("unreadable interface: {e}")]),
                    }
                }
                Err(LlmError::SchemaParseFailure { reason, .. }) => (String::new(), vec![reason]),
                Err(e) => return Err(e.into()),
            };
            violations = found;
            state.log.push("freeze", Some(&path), "rejected", violations.join("; "));
            req = req.assistant(reply).user(format!(
                "The interface was rejected:\n- {}\nReply with a corrected interface.",
                violations.join("\n- ")
            ));
        }
        let Some(mut iface) = accepted else {
            return Err(SynthError::ContractUnsatisfiable { file: path, violations });
        };
        iface.frozen = true;
        let names: Vec<&str> = iface.exports.iter().map(|e: &ExportDecl| e.name.as_str()).collect();
        state.log.push("freeze", Some(&path), "frozen", names.join(", "));
        state.interfaces.insert(path, iface);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::CitationGraph;
    use crate::grammar::PluginGrammar;
    use crate::llm::MockBackend;
    use crate::paper::parse_markdown;
    use crate::synth::construct_dag;

    fn state() -> SynthesisState {
        let doc = parse_markdown("---\nid: m\n---\n# M\n\nPlain.\n\n## References\n").unwrap();
        let g = PluginGrammar::default_grammar();
        let dag = construct_dag(&doc, &CitationGraph::new(&doc), &g, &Gateway::null(), "m").unwrap();
        SynthesisState::new(g, dag)
    }

    const MODEL_SIG: &str = "get_outputs(ray_bundle[R]) -> {rgb:[R,3], depth:[R,1]}";

    fn script() -> MockBackend {
        MockBackend::new()
            .push("freeze:config", r#"{"exports":[{"name":"method_specification"}],"imports":[]}"#)
            .push(
                "freeze:data_manager",
                r#"{"exports":[{"name":"DataManager"}],"imports":[{"name":"method_specification","from":"m/config.py"}]}"#,
            )
            .push(
                "freeze:model",
                json!({"exports":[{"name":"get_outputs","signature":MODEL_SIG},{"name":"get_loss_dict"}],
                       "imports":[{"name":"method_specification","from":"m/config.py"}]})
                .to_string(),
            )
            .push(
                "freeze:pipeline",
                r#"{"exports":[{"name":"Pipeline"}],"imports":[{"name":"get_outputs","from":"m/model.py"}]}"#,
            )
    }

    #[test]
    fn minimal_plan_freezes_in_topological_order() {
        let mut st = state();
        freeze_interfaces(&mut st, &Gateway::mock(script())).unwrap();
        let model = &st.interfaces["m/model.py"];
        assert_eq!(model.exports[0].signature.as_deref(), Some(MODEL_SIG));
        let frozen: Vec<&str> = st
            .log
            .events()
            .iter()
            .filter(|e| e.event == "frozen")
            .map(|e| e.node.as_deref().unwrap())
            .collect();
        assert_eq!(frozen, st.order());
        assert_eq!(frozen, ["m/config.py", "m/data_manager.py", "m/model.py", "m/pipeline.py"]);
    }

    #[test]
    fn missing_export_reprompts_once_then_fails() {
        let mut st = state();
        let bad = r#"{"exports":[],"imports":[]}"#;
        let mock = MockBackend::new().push("freeze:config", bad).push("freeze:config", bad);
        let gw = Gateway::mock(mock.clone());
        let err = freeze_interfaces(&mut st, &gw).unwrap_err();
        assert!(matches!(err, SynthError::ContractUnsatisfiable { ref file, .. } if file == "m/config.py"));
        assert_eq!(mock.calls().len(), 2);
        assert!(mock.requests()[1].messages.last().unwrap().text().contains("method_specification"));
    }

    #[test]
    fn non_ancestor_import_is_rejected() {
        let mut st = state();
        freeze_interfaces(&mut st, &Gateway::mock(script())).unwrap();
        let iface = FrozenInterface {
            exports: vec![ExportDecl {
                name: "method_specification".into(),
                signature: None,
            }],
            imports: vec![super::super::ImportDecl {
                name: "get_outputs".into(),
                from: "m/model.py".into(),
            }],
            frozen: false,
        };
        let v = check_interface(&st, "m/config.py", &iface);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("not an ancestor"));
    }

    #[test]
    fn signature_must_unify_with_contract() {
        let mut st = state();
        freeze_interfaces(&mut st, &Gateway::mock(script())).unwrap();
        let mut iface = st.interfaces["m/model.py"].clone();
        iface.exports[0].signature = Some("get_outputs(ray_bundle[R]) -> {rgb:[R,4], depth:[R,1]}".into());
        let v = check_interface(&st, "m/model.py", &iface);
        assert!(v[0].contains("does not match"), "{v:?}");
    }
}
