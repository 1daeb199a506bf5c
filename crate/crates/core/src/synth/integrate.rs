use super::implement::implement_with;
use super::{SynthError, SynthesisState};
use crate::grammar::validate_files;
use crate::llm::Gateway;
use crate::sandbox::{Sandbox, SmokeReport, SmokeRequest};

/// Lines of traceback passed to the repairing agent.
const EXCERPT_LINES: usize = 20;

fn summary(r: &SmokeReport) -> String {
    let mut s = format!(
        "imports_resolve={} registered={} train_started={} steps={} nan={}",
        r.imports_resolve, r.registered, r.train_started, r.steps_completed, r.nan_detected
    );
    if let Some(p) = r.psnr_eval {
        s.push_str(&format!(" psnr={p:.2}"));
    }
    if let Some(e) = &r.error {
        s.push_str(&format!(" error={}@{}", e.stage, e.file.as_deref().unwrap_or("?")));
    }
    s
}

/// Run the smoke pass over the current repository.
pub fn integration_test(
    state: &mut SynthesisState,
    sandbox: &dyn Sandbox,
    req: &SmokeRequest,
) -> Result<SmokeReport, SynthError> {
    let report = validate_files(&state.grammar, &state.repo.records());
    if !report.pass {
        state.log.push("integrate", None, "invalid", report.summary());
    }
    let smoke = sandbox.run(&state.repo, req)?;
    state.log.push("integrate", None, "smoke", summary(&smoke));
    Ok(smoke)
}

/// The plan node to blame: the first repository path named in the
/// traceback, then the report's file, then the Pipeline node.
pub fn localize_fault(state: &SynthesisState, report: &SmokeReport) -> Option<String> {
    let err = report.error.as_ref();
    let text = err.map_or("", |e| e.traceback.as_str());
    let first = state
        .plan
        .nodes
        .iter()
        .map(|n| n.path.as_str())
        .chain(state.repo.files.keys().map(String::as_str))
        .filter_map(|p| text.find(p).map(|i| (i, p)))
        .min()
        .map(|(_, p)| p)
        .or_else(|| err.and_then(|e| e.file.as_deref()));
    match first {
        Some(p) if state.plan.node(p).is_some() => Some(p.to_string()),
        _ => state.plan.node_for_role("Pipeline").map(|n| n.path.clone()),
    }
}

fn excerpt(tb: &str) -> String {
    let lines: Vec<&str> = tb.lines().collect();
    lines[lines.len().saturating_sub(EXCERPT_LINES)..].join("\n")
}

/// Re-implement the one node the failure points at. Returns its path.
pub fn repair(state: &mut SynthesisState, report: &SmokeReport, gateway: &Gateway) -> Result<String, SynthError> {
    let Some(err) = &report.error else {
        return Err(SynthError::NothingToRepair);
    };
    if state.repairs >= state.budgets.repair {
        return Err(SynthError::RepairBudgetExhausted(Box::new(report.clone())));
    }
    let path = localize_fault(state, report).ok_or_else(|| SynthError::UnknownNode("Pipeline".into()))?;
    state.repairs += 1;
    state.log.push(
        "repair",
        Some(&path),
        "localized",
        format!("round {} of {}: {} failure", state.repairs, state.budgets.repair, err.stage),
    );
    let context = format!("stage: {}\n{}", err.stage, excerpt(&err.traceback));
    implement_with(state, &path, gateway, "repair", Some(&context))?;
    Ok(path)
}
