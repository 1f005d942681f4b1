//! Common probabilistic-classifier contract over all model families.

mod knn;
mod logistic;
mod scaler;

pub use knn::{knn_classify, KnnModel};
pub use logistic::{lr_fit, lr_fit_traced, LogisticModel, LrParams};
pub use scaler::{scaler_fit_transform, StandardScaler};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::trees::{
    fit_forest, fit_gbt, fit_tree, BoostParams, BoostedEnsemble, DecisionTree, ForestParams, RandomForest, TreeError,
    TreeParams,
};

#[derive(Debug, thiserror::Error)]
pub enum LearnerError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no training rows")]
    EmptyData,
    #[error("k = {k} exceeds the {n} training rows (or is 0)")]
    KTooLarge { k: usize, n: usize },
    #[error("expected {expected} features, got {got}")]
    FeatureLengthMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Gbt,
    Rf,
    Dt,
    Knn,
    Lr,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Gbt, Family::Rf, Family::Dt, Family::Knn, Family::Lr];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gbt => "GBT",
            Family::Rf => "RF",
            Family::Dt => "DT",
            Family::Knn => "KNN",
            Family::Lr => "LR",
        }
    }

    pub fn parse(s: &str) -> Result<Family, LearnerError> {
        match s.to_ascii_uppercase().as_str() {
            "GBT" | "XGB" => Ok(Family::Gbt),
            "RF" => Ok(Family::Rf),
            "DT" => Ok(Family::Dt),
            "KNN" => Ok(Family::Knn),
            "LR" => Ok(Family::Lr),
            _ => Err(LearnerError::UnknownFamily(s.to_string())),
        }
    }

    /// KNN and LR are distance/scale sensitive and always standardized.
    pub fn requires_scaling(self) -> bool {
        matches!(self, Family::Knn | Family::Lr)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum Hyperparams {
    #[serde(rename = "GBT")]
    Gbt(BoostParams),
    #[serde(rename = "RF")]
    Rf(ForestParams),
    #[serde(rename = "DT")]
    Dt(TreeParams),
    #[serde(rename = "KNN")]
    Knn(KnnParams),
    #[serde(rename = "LR")]
    Lr(LrParams),
}

impl Hyperparams {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Gbt => Hyperparams::Gbt(BoostParams::default()),
            Family::Rf => Hyperparams::Rf(ForestParams::default()),
            Family::Dt => Hyperparams::Dt(TreeParams::default()),
            Family::Knn => Hyperparams::Knn(KnnParams::default()),
            Family::Lr => Hyperparams::Lr(LrParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Gbt(_) => Family::Gbt,
            Hyperparams::Rf(_) => Family::Rf,
            Hyperparams::Dt(_) => Family::Dt,
            Hyperparams::Knn(_) => Family::Knn,
            Hyperparams::Lr(_) => Family::Lr,
        }
    }

    /// Parameters as a flat JSON object, e.g. `{"max_depth": 6, ...}`.
    pub fn to_map(&self) -> serde_json::Map<String, serde_json::Value> {
        match serde_json::to_value(self).expect("params serialize") {
            serde_json::Value::Object(mut o) => match o.remove("params") {
                Some(serde_json::Value::Object(p)) => p,
                _ => unreachable!("adjacently tagged enum"),
            },
            _ => unreachable!("adjacently tagged enum"),
        }
    }

    /// Replaces named fields; values are JSON literals (`0.1`, `true`, `"Entropy"`).
    pub fn with_overrides<'a>(
        &self,
        overrides: impl IntoIterator<Item = (&'a str, serde_json::Value)>,
    ) -> Result<Self, LearnerError> {
        let mut map = self.to_map();
        for (key, value) in overrides {
            if !map.contains_key(key) {
                return Err(LearnerError::InvalidParams(format!(
                    "{} has no parameter `{key}`",
                    self.family()
                )));
            }
            map.insert(key.to_string(), value);
        }
        let tagged = serde_json::json!({ "family": self.family().as_str(), "params": map });
        serde_json::from_value(tagged).map_err(|e| LearnerError::InvalidParams(e.to_string()))
    }

    /// Parses `key=value,key=value`; an empty string means no overrides.
    pub fn with_override_str(&self, spec: &str) -> Result<Self, LearnerError> {
        let mut pairs = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| LearnerError::InvalidParams(format!("expected key=value, got `{item}`")))?;
            let v = v.trim();
            let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
            pairs.push((k.trim(), value));
        }
        self.with_overrides(pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub params: Hyperparams,
    pub scaling: bool,
}

impl ClassifierSpec {
    pub fn new(params: Hyperparams) -> Self {
        ClassifierSpec {
            scaling: params.family().requires_scaling(),
            params,
        }
    }

    pub fn default_for(family: Family) -> Self {
        Self::new(Hyperparams::default_for(family))
    }

    /// Scaling can be switched on for tree models but never off for KNN/LR.
    pub fn with_scaling(mut self, scaling: bool) -> Self {
        self.scaling = scaling || self.family().requires_scaling();
        self
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn fit(&self, x: &Matrix, y: &[bool], seed: u64) -> Result<Model, LearnerError> {
        if x.n_rows() == 0 {
            return Err(LearnerError::EmptyData);
        }
        let scaling = self.scaling || self.family().requires_scaling();
        let scaler = if scaling { Some(StandardScaler::fit(x)?) } else { None };
        let scaled;
        let xs = match &scaler {
            Some(s) => {
                scaled = s.transform(x);
                &scaled
            }
            None => x,
        };
        let fitted = match self.params {
            Hyperparams::Gbt(p) => Fitted::Gbt(fit_gbt(xs, y, &BoostParams { seed, ..p })?),
            Hyperparams::Rf(p) => Fitted::Rf(fit_forest(xs, y, &p, seed)?),
            Hyperparams::Dt(p) => Fitted::Dt(fit_tree(xs, y, &p)?),
            Hyperparams::Knn(p) => Fitted::Knn(KnnModel::fit(xs, y, p.k)?),
            Hyperparams::Lr(p) => {
                let m = lr_fit(xs, y, &p)?;
                if !m.converged {
                    log::warn!("logistic regression stopped after {} iterations without converging", m.iterations);
                }
                Fitted::Lr(m)
            }
        };
        Ok(Model {
            n_features: x.n_cols(),
            scaler,
            fitted,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    Gbt(BoostedEnsemble),
    Rf(RandomForest),
    Dt(DecisionTree),
    Knn(KnnModel),
    Lr(LogisticModel),
}

/// A fitted classifier: optional scaler followed by one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub n_features: usize,
    pub scaler: Option<StandardScaler>,
    pub fitted: Fitted,
}

impl Model {
    pub fn family(&self) -> Family {
        match self.fitted {
            Fitted::Gbt(_) => Family::Gbt,
            Fitted::Rf(_) => Family::Rf,
            Fitted::Dt(_) => Family::Dt,
            Fitted::Knn(_) => Family::Knn,
            Fitted::Lr(_) => Family::Lr,
        }
    }

    /// Probability of Bacteria for one feature vector.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnerError> {
        if x.len() != self.n_features {
            return Err(LearnerError::FeatureLengthMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.transform_row(x);
                &scaled[..]
            }
            None => x,
        };
        Ok(match &self.fitted {
            Fitted::Gbt(m) => m.predict_proba(x)?,
            Fitted::Rf(m) => m.predict_proba(x)?,
            Fitted::Dt(m) => m.predict_proba(x)?,
            Fitted::Knn(m) => m.predict_proba(x),
            Fitted::Lr(m) => m.predict_proba(x),
        })
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>, LearnerError> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict_proba(x.row(i))).collect()
    }

    /// Structural validation after deserialization.
    pub fn validate(&self) -> Result<(), LearnerError> {
        let nf = self.n_features;
        let bad = |m: &str| Err(LearnerError::InvalidParams(m.to_string()));
        if let Some(s) = &self.scaler {
            if s.n_features() != nf || s.sd.len() != nf || s.sd.iter().any(|v| !(*v > 0.0)) {
                return bad("scaler shape or sd invalid");
            }
        }
        match &self.fitted {
            Fitted::Gbt(m) => {
                if m.n_features != nf || !m.base_score.is_finite() {
                    return bad("ensemble header invalid");
                }
                for t in &m.trees {
                    t.validate(nf)?;
                    if t.leaves().any(|w| !w.is_finite()) {
                        return bad("non-finite leaf weight");
                    }
                }
            }
            Fitted::Rf(m) => {
                if m.n_features != nf || m.trees.is_empty() {
                    return bad("forest header invalid");
                }
                for t in &m.trees {
                    t.validate(nf)?;
                }
            }
            Fitted::Dt(m) => {
                if m.n_features != nf {
                    return bad("tree header invalid");
                }
                m.tree.validate(nf)?;
            }
            Fitted::Knn(m) => {
                if m.train.n_cols() != nf || m.labels.len() != m.train.n_rows() || m.k == 0 || m.k > m.labels.len() {
                    return bad("knn payload invalid");
                }
            }
            Fitted::Lr(m) => {
                if m.coefficients.len() != nf {
                    return bad("coefficient count invalid");
                }
            }
        }
        Ok(())
    }
}
