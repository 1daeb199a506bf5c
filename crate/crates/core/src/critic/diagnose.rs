use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::patch::Patch;
use super::CriticError;
use crate::llm::{Gateway, LlmRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactClass {
    Floater,
    Ghosting,
    Blur,
    ColorShift,
    GeometryBreak,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub class: ArtifactClass,
    /// Suspected plugin role, e.g. `Sampler`.
    pub role: String,
    pub rationale: String,
    pub patch: Patch,
}

pub const DIAGNOSE_TAG: &str = "critique";

const DIAGNOSE_PROMPT: &str = "You review renders of a radiance-field method. The images are the ground truth, \
the render, and a heatmap where bright means low local PSNR. Name each artifact, the plugin role most likely \
responsible, and one small patch: a hyperparameter change in the config file or an exact code edit. \
Reply with JSON only; an empty list means the renders need no change.";

static DIAGNOSE_SCHEMA: LazyLock<Value> = LazyLock::new(|| {
    json!({
        "type": "object",
        "required": ["diagnoses"],
        "properties": {
            "diagnoses": {"type": "array", "items": {
                "type": "object",
                "required": ["class", "role", "rationale", "patch"],
                "properties": {
                    "class": {"type": "string", "enum": ["floater", "ghosting", "blur", "color-shift", "geometry-break", "other"]},
                    "role": {"type": "string"},
                    "rationale": {"type": "string"},
                    "patch": {"type": "object", "required": ["target", "kind"], "properties": {
                        "target": {"type": "string"},
                        "kind": {"type": "string", "enum": ["hyperparameter-change", "code-edit"]}
                    }}
                }
            }}
        }
    })
});

#[derive(Deserialize)]
struct Reply {
    diagnoses: Vec<Diagnosis>,
}

/// Ask the vision model about one artifact triplet. An empty list is a
/// valid answer.
pub fn vlm_diagnose(
    gt: &Path,
    render: &Path,
    heatmap: &Path,
    context: &str,
    gateway: &Gateway,
) -> Result<Vec<Diagnosis>, CriticError> {
    let req = LlmRequest::new(DIAGNOSE_TAG, gateway.model_for("critic"))
        .system(DIAGNOSE_PROMPT)
        .user_with_images(context, &[gt, render, heatmap])?
        .with_schema(DIAGNOSE_SCHEMA.clone())
        .with_temperature(0.0);
    let resp = gateway.complete_structured(&req)?;
    let value = resp.structured.unwrap_or(Value::Null);
    let reply: Reply = serde_json::from_value(value).map_err(|e| CriticError::MalformedDiagnosis(e.to_string()))?;
    for d in &reply.diagnoses {
        if d.role.trim().is_empty() {
            return Err(CriticError::MalformedDiagnosis("empty role".into()));
        }
        d.patch.check()?;
    }
    Ok(reply.diagnoses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::image::Image;
    use crate::llm::{LlmError, MockBackend};

    fn triplet(dir: &Path) -> [std::path::PathBuf; 3] {
        let names = ["gt.png", "render.png", "heat.png"];
        names.map(|n| {
            let p = dir.join(n);
            Image::new(4, 4, [0.5; 3]).save_png(&p).unwrap();
            p
        })
    }

    const FLOATER: &str = r#"{"diagnoses":[{"class":"floater","role":"Sampler","rationale":"blob near camera",
        "patch":{"target":"m/config.py","kind":"hyperparameter-change","key":"learning_rate","value":0.01}}]}"#;

    #[test]
    fn scripted_floater() {
        let dir = tempfile::tempdir().unwrap();
        let [g, r, h] = triplet(dir.path());
        let gw = Gateway::mock(MockBackend::new().push(DIAGNOSE_TAG, FLOATER));
        let d = vlm_diagnose(&g, &r, &h, "psnr 18.2", &gw).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].class, d[0].role.as_str()), (ArtifactClass::Floater, "Sampler"));
    }

    #[test]
    fn prose_fails_after_one_reprompt() {
        let dir = tempfile::tempdir().unwrap();
        let [g, r, h] = triplet(dir.path());
        let mock = MockBackend::new().push(DIAGNOSE_TAG, "looks fine").push(DIAGNOSE_TAG, "still fine");
        let err = vlm_diagnose(&g, &r, &h, "", &Gateway::mock(mock.clone())).unwrap_err();
        assert!(matches!(err, CriticError::Llm(LlmError::SchemaParseFailure { .. })));
        assert_eq!(mock.calls().len(), 2);
    }

    #[test]
    fn missing_image_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let [g, r, _] = triplet(dir.path());
        let gw = Gateway::mock(MockBackend::new().push(DIAGNOSE_TAG, FLOATER));
        let err = vlm_diagnose(&g, &r, &dir.path().join("nope.png"), "", &gw).unwrap_err();
        assert!(matches!(err, CriticError::Llm(LlmError::MissingImage(_))));
    }

    #[test]
    fn unknown_class_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let [g, r, h] = triplet(dir.path());
        let bad = FLOATER.replace("floater", "sparkle");
        let gw = Gateway::mock(MockBackend::new().push(DIAGNOSE_TAG, bad.clone()).push(DIAGNOSE_TAG, bad));
        assert!(vlm_diagnose(&g, &r, &h, "", &gw).is_err());
    }
}
