use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{Dataset, FEATURE_ORDER};
use crate::explain::sample_background;
use crate::learners::{ClassifierSpec, Family, Hyperparams, LearnerError, Model};
use crate::matrix::Matrix;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_BACKGROUND_ROWS: usize = 100;
pub const DEFAULT_EXPLAIN_PERMUTATIONS: usize = 2000;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("content digest does not match (stored {stored}, computed {computed})")]
    DigestMismatch { stored: String, computed: String },
    #[error("format version {0} is not supported (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("malformed model file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub params: Hyperparams,
    pub scaling: bool,
    pub seed: u64,
    pub n_train: usize,
    pub n_bacteria: usize,
    pub n_virus: usize,
    pub n_noise_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSettings {
    pub seed: u64,
    pub n_permutations: usize,
    /// Background rows in feature order.
    pub background: Vec<Vec<f64>>,
}

impl ExplainSettings {
    pub fn background_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.background)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model_id: String,
    pub family: Family,
    pub feature_order: Vec<FeatureSpec>,
    pub model: Model,
    pub training: TrainingInfo,
    pub explain: ExplainSettings,
    /// RFC 3339 creation time.
    pub created_at: String,
    /// Hex SHA-256 of the document without this field.
    #[serde(default)]
    pub digest: String,
}

/// `VB_<yyyymmdd>_<n_train>_<n_features>`.
pub fn model_id(created: chrono::DateTime<chrono::Utc>, n_train: usize, n_features: usize) -> String {
    format!("VB_{}_{}_{}", created.format("%Y%m%d"), n_train, n_features)
}

fn digest_of(doc: &serde_json::Map<String, Value>) -> String {
    let mut body = doc.clone();
    body.remove("digest");
    let text = serde_json::to_string(&Value::Object(body)).expect("json values serialize");
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

impl ModelBundle {
    /// Fits `spec` on the labeled cases of `train` not listed in `noise`.
    pub fn train(
        spec: &ClassifierSpec,
        train: &Dataset,
        noise: &std::collections::BTreeSet<String>,
        seed: u64,
        created: chrono::DateTime<chrono::Utc>,
    ) -> Result<Self, BundleError> {
        let data = train.labeled().filter(|c| !noise.contains(&c.case_id));
        let x = data.feature_matrix();
        let model = spec.fit(&x, &data.targets(), seed)?;
        let counts = data.class_counts();
        let background = sample_background(&x, DEFAULT_BACKGROUND_ROWS, seed);
        let mut bundle = ModelBundle {
            format_version: FORMAT_VERSION,
            model_id: model_id(created, data.len(), x.n_cols()),
            family: spec.family(),
            feature_order: FEATURE_ORDER
                .iter()
                .map(|f| FeatureSpec {
                    name: f.name().to_string(),
                    unit: f.unit().to_string(),
                })
                .collect(),
            model,
            training: TrainingInfo {
                params: spec.params,
                scaling: spec.scaling,
                seed,
                n_train: data.len(),
                n_bacteria: counts.bacteria,
                n_virus: counts.virus,
                n_noise_excluded: train.labeled().len() - data.len(),
            },
            explain: ExplainSettings {
                seed,
                n_permutations: DEFAULT_EXPLAIN_PERMUTATIONS,
                background: background.rows().map(<[f64]>::to_vec).collect(),
            },
            created_at: created.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            digest: String::new(),
        };
        bundle.seal();
        Ok(bundle)
    }

    /// Recomputes and stores the digest.
    pub fn seal(&mut self) {
        self.digest = String::new();
        match serde_json::to_value(&*self).expect("bundle serializes") {
            Value::Object(map) => self.digest = digest_of(&map),
            _ => unreachable!("bundle is an object"),
        }
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        let bad = |m: String| Err(BundleError::MalformedFile(m));
        if self.feature_order.len() != self.model.n_features {
            return bad(format!(
                "{} features listed but the model expects {}",
                self.feature_order.len(),
                self.model.n_features
            ));
        }
        if self.family != self.model.family() {
            return bad(format!("family {} does not match payload {}", self.family, self.model.family()));
        }
        if self.explain.background.is_empty() || self.explain.background.iter().any(|r| r.len() != self.model.n_features) {
            return bad("explanation background shape".into());
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64, BundleError> {
        Ok(self.model.predict_proba(features)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, BundleError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| BundleError::MalformedFile(e.to_string()))?;
        let Value::Object(map) = doc else {
            return Err(BundleError::MalformedFile("top level is not an object".into()));
        };
        let version = map
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| BundleError::MalformedFile("missing format_version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(BundleError::UnsupportedVersion(version));
        }
        let stored = map.get("digest").and_then(Value::as_str).unwrap_or("").to_string();
        let computed = digest_of(&map);
        if stored != computed {
            return Err(BundleError::DigestMismatch { stored, computed });
        }
        let bundle: ModelBundle =
            serde_json::from_value(Value::Object(map)).map_err(|e| BundleError::MalformedFile(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<(), BundleError> {
    bundle.validate()?;
    fs::write(path, bundle.to_text())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelBundle, BundleError> {
    ModelBundle::from_text(&fs::read_to_string(path)?)
}
