use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::freeze::{describe_interfaces, describe_spec};
use super::{SynthError, SynthesisState};
use crate::grammar::role_snake;
use crate::llm::{Gateway, LlmRequest};
use crate::repo::{module_of, scan_exports, scan_imports, scan_role};
use crate::sandbox::check_syntax;
use crate::shape::unify_shapes;

const IMPLEMENT_PROMPT: &str = "You implement one Python file of a radiance-field method plugin. \
Export exactly the frozen names, import only from the listed ancestor files, and put a `# shape:` comment \
above every function whose signature is declared. Reply with the complete file in one python code block.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileArtifact {
    pub path: String,
    pub source: String,
    pub attempts: u32,
}

/// Body of the first fenced code block, or the whole reply.
pub fn extract_code(text: &str) -> String {
    let body = match text.find("```") {
        Some(start) => {
            let after = &text[start + 3..];
            let after = after.split_once('\n').map_or("", |(_, rest)| rest);
            match after.find("```") {
                Some(end) => &after[..end],
                None => after,
            }
        }
        None => text,
    };
    let mut code = body.trim_matches('\n').to_string();
    code.push('\n');
    code
}

fn with_role_header(code: String, role: &str) -> String {
    if scan_role(&code).is_some() {
        code
    } else {
        format!("# role: {role}\n{code}")
    }
}

/// Local contract violations of `code` as the implementation of `path`.
pub fn check_artifact(state: &SynthesisState, path: &str, code: &str) -> Vec<String> {
    let mut out = Vec::new();
    let Some(role) = state.role_of(path) else {
        return vec![format!("`{path}` is not a plan node")];
    };
    match scan_role(code) {
        Some(r) if r != role => out.push(format!("file declares role {r}, expected {role}")),
        _ => {}
    }
    if let Err((line, msg)) = check_syntax(code) {
        out.push(format!("line {line}: {msg}"));
    }

    let found: BTreeMap<String, _> = scan_exports(code).into_iter().collect();
    if let Some(iface) = state.interfaces.get(path) {
        for e in &iface.exports {
            match found.get(&e.name) {
                None => out.push(format!("frozen export `{}` is not defined", e.name)),
                Some(got) => {
                    let want = e.signature.as_deref().and_then(|s| s.parse().ok());
                    if let (Some(want), Some(got)) = (want, got) {
                        if let Err(m) = unify_shapes(&want, got) {
                            out.push(format!("`{}` is `{got}`, frozen as `{want}`: {m}", e.name));
                        }
                    }
                }
            }
        }
    }

    let package = &state.plan.package;
    let modules: BTreeMap<String, &str> = state
        .plan
        .nodes
        .iter()
        .filter_map(|n| module_of(&n.path).map(|m| (m, n.path.as_str())))
        .collect();
    let ancestors = state.ancestors(path);
    for stmt in scan_imports(path, code) {
        let internal = stmt.module == *package || stmt.module.starts_with(&format!("{package}."));
        if !internal {
            continue;
        }
        // `from pkg import model` names submodules.
        let targets: Vec<(String, Vec<String>)> = if stmt.module == *package && stmt.from_form {
            stmt.names.iter().map(|n| (format!("{package}.{n}"), Vec::new())).collect()
        } else {
            vec![(stmt.module.clone(), stmt.names.clone())]
        };
        for (module, names) in targets {
            let Some(provider) = modules.get(&module) else {
                out.push(format!("line {}: `{module}` is not a file of the plan", stmt.line));
                continue;
            };
            if !ancestors.contains(*provider) {
                out.push(format!("line {}: `{provider}` is not an ancestor of `{path}`", stmt.line));
                continue;
            }
            let iface = state.interfaces.get(*provider);
            for n in names {
                if !iface.is_some_and(|i| i.exports_name(&n)) {
                    out.push(format!("line {}: `{provider}` does not export `{n}`", stmt.line));
                }
            }
        }
    }
    out
}

fn context(state: &SynthesisState, path: &str, error: Option<&str>) -> String {
    let spec = &state.specs[path];
    let iface = &state.interfaces[path];
    let mut out = String::new();
    let _ = writeln!(out, "File: {path}\nRole: {}\nFrozen interface:", spec.role);
    for e in &iface.exports {
        let _ = writeln!(out, "  export {} {}", e.name, e.signature.as_deref().unwrap_or(""));
    }
    for i in &iface.imports {
        let _ = writeln!(out, "  import {} from {}", i.name, i.from);
    }
    describe_spec(&mut out, spec);
    let ancestors = state.ancestors(path);
    if !ancestors.is_empty() {
        out.push_str("Ancestor interfaces:\n");
        describe_interfaces(&mut out, state, &ancestors);
    }
    for ex in &spec.exemplars {
        let _ = writeln!(out, "Exemplar:\n{ex}");
    }
    if let Some(err) = error {
        let current = state.repo.get(path).unwrap_or("");
        let _ = writeln!(out, "Current file:\n{current}\nSmoke test failure:\n{err}");
    }
    out
}

pub(super) fn implement_with(
    state: &mut SynthesisState,
    path: &str,
    gateway: &Gateway,
    phase: &str,
    error: Option<&str>,
) -> Result<FileArtifact, SynthError> {
    let role = state.role_of(path).ok_or_else(|| SynthError::UnknownNode(path.to_string()))?.to_string();
    for p in std::iter::once(path.to_string()).chain(state.ancestors(path)) {
        if !state.interfaces.get(&p).is_some_and(|i| i.frozen) {
            return Err(SynthError::NotFrozen {
                file: path.to_string(),
                waiting_on: p,
            });
        }
    }
    let mut req = LlmRequest::new(format!("{phase}:{}", role_snake(&role)), gateway.model_for(phase))
        .system(IMPLEMENT_PROMPT)
        .user(context(state, path, error))
        .with_temperature(0.0);
    let mut violations = Vec::new();
    for attempt in 1..=state.budgets.implement {
        *state.attempts.entry(format!("{phase}:{path}")).or_insert(0) = attempt;
        let reply = gateway.complete(&req)?.text;
        let code = with_role_header(extract_code(&reply), &role);
        violations = check_artifact(state, path, &code);
        if violations.is_empty() {
            state.repo.insert(path, code.clone());
            state.log.push(phase, Some(path), "implemented", format!("attempt {attempt}"));
            return Ok(FileArtifact {
                path: path.to_string(),
                source: code,
                attempts: attempt,
            });
        }
        state.log.push(phase, Some(path), "rejected", violations.join("; "));
        req = req.assistant(reply).user(format!(
            "The file was rejected:\n- {}\nReply with the corrected complete file.",
            violations.join("\n- ")
        ));
    }
    Err(SynthError::LocalContractFailure {
        file: path.to_string(),
        violations,
    })
}

/// Generate one file against its frozen interface, reprompting with local
/// check failures until the attempt budget runs out.
pub fn implement_node(state: &mut SynthesisState, path: &str, gateway: &Gateway) -> Result<FileArtifact, SynthError> {
    implement_with(state, path, gateway, "implement", None)
}
