//! Versioned JSON model documents.
//!
//! ```json
//! {
//!   "format": "cooc-model",
//!   "version": 1,
//!   "domain": { "kind": "pixel", "width": 28, "height": 28 },
//!   "group_size": 14,
//!   "assignment": [0, 0, 3, ...],
//!   "histograms": [ { "edges": [0, 1, 3, ...], "probs": [0.2, ...] }, ... ],
//!   "meta": { "group_size": 14, "bins": 8, ... }
//! }
//! ```
//!
//! A class model set wraps a list of such documents (without their own
//! header) under `"format": "cooc-class-models"`. Floats are written in
//! shortest round-trip form, so loading reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{CoocModel, FitMeta, GroupHistogram, Grouping};
use crate::sparsity::IndexDomain;
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "cooc-model";
pub const CLASS_MODELS_FORMAT: &str = "cooc-class-models";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelBody {
    domain: IndexDomain,
    group_size: usize,
    assignment: Vec<usize>,
    histograms: Vec<GroupHistogram>,
    meta: FitMeta,
}

impl ModelBody {
    fn of(model: &CoocModel) -> Self {
        Self {
            domain: *model.domain(),
            group_size: model.grouping().group_size(),
            assignment: model.grouping().assignment().to_vec(),
            histograms: model.histograms().to_vec(),
            meta: model.meta.clone(),
        }
    }

    fn into_model(self) -> Result<CoocModel> {
        let corrupt = |e: Error| match e {
            Error::InvalidArgument(m) | Error::DomainMismatch(m) => Error::Invariant(m),
            other => other,
        };
        self.domain.validate().map_err(corrupt)?;
        let grouping = Grouping::new(self.domain, self.group_size, self.assignment).map_err(corrupt)?;
        CoocModel::new(grouping, self.histograms, self.meta).map_err(corrupt)
    }
}

#[derive(Serialize)]
struct ModelDoc<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    body: ModelBody,
}

#[derive(Serialize)]
struct ClassModelsDoc<'a> {
    format: &'a str,
    version: u32,
    models: Vec<ModelBody>,
}

fn check_header(doc: &Value, format: &str) -> Result<()> {
    match doc.get("format").and_then(Value::as_str) {
        Some(f) if f == format => {}
        Some(f) => return Err(Error::Format(format!("expected a '{format}' document, found '{f}'"))),
        None => return Err(Error::Format("document has no format tag".into())),
    }
    let version = doc
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("document has no integer version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version.try_into().unwrap_or(u32::MAX),
        });
    }
    Ok(())
}

fn pretty<T: Serialize>(doc: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    Ok(text)
}

pub fn model_to_json(model: &CoocModel) -> Result<String> {
    pretty(&ModelDoc {
        format: MODEL_FORMAT,
        version: FORMAT_VERSION,
        body: ModelBody::of(model),
    })
}

pub fn model_from_json(text: &str) -> Result<CoocModel> {
    let mut doc: Value = serde_json::from_str(text)?;
    check_header(&doc, MODEL_FORMAT)?;
    if let Some(obj) = doc.as_object_mut() {
        obj.remove("format");
        obj.remove("version");
    }
    let body: ModelBody = serde_json::from_value(doc)?;
    body.into_model()
}

pub fn save_model(path: impl AsRef<Path>, model: &CoocModel) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CoocModel> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn class_models_to_json(models: &[CoocModel]) -> Result<String> {
    pretty(&ClassModelsDoc {
        format: CLASS_MODELS_FORMAT,
        version: FORMAT_VERSION,
        models: models.iter().map(ModelBody::of).collect(),
    })
}

pub fn class_models_from_json(text: &str) -> Result<Vec<CoocModel>> {
    let doc: Value = serde_json::from_str(text)?;
    check_header(&doc, CLASS_MODELS_FORMAT)?;
    let models = doc
        .get("models")
        .cloned()
        .ok_or_else(|| Error::Format("class model document has no models".into()))?;
    let bodies: Vec<ModelBody> = serde_json::from_value(models)?;
    bodies.into_iter().map(ModelBody::into_model).collect()
}

pub fn save_class_models(path: impl AsRef<Path>, models: &[CoocModel]) -> Result<()> {
    fs::write(path, class_models_to_json(models)?)?;
    Ok(())
}

pub fn load_class_models(path: impl AsRef<Path>) -> Result<Vec<CoocModel>> {
    class_models_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::SignificanceMap;

    fn model() -> CoocModel {
        let d = IndexDomain::pixel(5, 3).unwrap();
        let maps: Vec<SignificanceMap> = (0..7)
            .map(|l| SignificanceMap::from_indices(d, (0..15).filter(|p| (p * 7 + l) % 3 == 0)).unwrap())
            .collect();
        let assignment = (0..15).map(|p| (p * 4) % 15 / 4).collect();
        let grouping = Grouping::new(d, 4, assignment).unwrap();
        let mut m = CoocModel::from_grouping(grouping, &maps, 3).unwrap();
        m.meta.iterations = 4;
        m
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = model();
        let text = model_to_json(&m).unwrap();
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.histograms().iter().zip(m.histograms()) {
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(model_to_json(&back).unwrap(), text);
    }

    #[test]
    fn unknown_version_rejected() {
        let text = model_to_json(&model()).unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            model_from_json(&text),
            Err(Error::Version { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn unbalanced_grouping_rejected() {
        let mut doc: Value = serde_json::from_str(&model_to_json(&model()).unwrap()).unwrap();
        let assignment = doc["assignment"].as_array_mut().unwrap();
        let first = assignment[0].as_u64().unwrap();
        let other = assignment.iter().position(|v| v.as_u64() != Some(first)).unwrap();
        assignment[other] = first.into();
        assert!(matches!(model_from_json(&doc.to_string()), Err(Error::Invariant(_))));
    }

    #[test]
    fn bad_histogram_rejected() {
        let mut doc: Value = serde_json::from_str(&model_to_json(&model()).unwrap()).unwrap();
        doc["histograms"][0]["probs"][0] = 0.9.into();
        assert!(matches!(model_from_json(&doc.to_string()), Err(Error::Invariant(_))));
    }

    #[test]
    fn wrong_format_rejected() {
        let text = class_models_to_json(&[model()]).unwrap();
        assert!(matches!(model_from_json(&text), Err(Error::Format(_))));
        assert_eq!(class_models_from_json(&text).unwrap(), vec![model()]);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &model()).unwrap();
        assert_eq!(load_model(&path).unwrap(), model());
        let set = dir.path().join("set.json");
        save_class_models(&set, &[model(), model()]).unwrap();
        assert_eq!(load_class_models(&set).unwrap().len(), 2);
    }
}
