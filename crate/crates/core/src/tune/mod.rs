//! Random-search hyperparameter tuning with a cross-validated accuracy objective.

use std::collections::BTreeSet;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::Dataset;
use crate::eval::{cross_validate_with, grouped_stratified_kfold, EvalError};
use crate::learners::{ClassifierSpec, Family, Hyperparams, LearnerError};

pub const DEFAULT_BUDGET: usize = 60;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("budget must be ≥ 1")]
    ZeroBudget,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Integers `lo, lo + step, …` not exceeding `hi`.
    IntUniform { lo: i64, hi: i64, step: i64 },
    Categorical(Vec<Value>),
}

impl Distribution {
    fn validate(&self) -> Result<(), String> {
        let ok = match self {
            Distribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Distribution::LogUniform { lo, hi } => *lo > 0.0 && hi.is_finite() && lo <= hi,
            Distribution::IntUniform { lo, hi, step } => lo <= hi && *step >= 1,
            Distribution::Categorical(v) => !v.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("bad bounds {self:?}"))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            Distribution::Uniform { lo, hi } => Value::from(lo + (hi - lo) * rng.random::<f64>()),
            Distribution::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                Value::from((a + (b - a) * rng.random::<f64>()).exp())
            }
            Distribution::IntUniform { lo, hi, step } => {
                let n = (hi - lo) / step;
                Value::from(lo + step * rng.random_range(0..=n))
            }
            Distribution::Categorical(v) => v[rng.random_range(0..v.len())].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub family: Family,
    /// Sampled in this order; parameters not listed keep their defaults.
    pub params: Vec<(String, Distribution)>,
}

impl SearchSpace {
    pub fn default_for(family: Family) -> Self {
        use Distribution::*;
        let p = |name: &str, d: Distribution| (name.to_string(), d);
        let params = match family {
            Family::Gbt => vec![
                p("n_rounds", IntUniform { lo: 50, hi: 400, step: 1 }),
                p("max_depth", IntUniform { lo: 3, hi: 8, step: 1 }),
                p("learning_rate", LogUniform { lo: 0.03, hi: 0.3 }),
                p("l2_reg", LogUniform { lo: 0.5, hi: 8.0 }),
                p("subsample_rows", Uniform { lo: 0.6, hi: 1.0 }),
                p("subsample_features", Uniform { lo: 0.6, hi: 1.0 }),
            ],
            Family::Rf => vec![
                p("n_trees", IntUniform { lo: 100, hi: 500, step: 1 }),
                p("max_depth", IntUniform { lo: 4, hi: 16, step: 1 }),
                p("mtry", IntUniform { lo: 3, hi: 8, step: 1 }),
            ],
            Family::Dt => vec![
                p("max_depth", IntUniform { lo: 2, hi: 12, step: 1 }),
                p("min_samples_leaf", IntUniform { lo: 1, hi: 20, step: 1 }),
                p("criterion", Categorical(vec![Value::from("Gini"), Value::from("Entropy")])),
            ],
            Family::Knn => vec![p("k", IntUniform { lo: 3, hi: 51, step: 2 })],
            Family::Lr => vec![p("l2", LogUniform { lo: 1e-4, hi: 10.0 })],
        };
        SearchSpace { family, params }
    }

    /// Line format: `family GBT`, then `name uniform|loguniform lo hi`,
    /// `name int lo hi [step]` or `name categorical v1,v2,…`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TuneError> {
        let bad = |m: String| TuneError::InvalidSpace(m);
        let mut family = None;
        let mut params = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64, TuneError> {
                t.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(format!("line {}: expected a number", no + 1)))
            };
            if t[0] == "family" && t.len() == 2 {
                family = Some(Family::parse(t[1])?);
                continue;
            }
            let d = match t.get(1).copied() {
                Some("uniform") => Distribution::Uniform { lo: num(2)?, hi: num(3)? },
                Some("loguniform") => Distribution::LogUniform { lo: num(2)?, hi: num(3)? },
                Some("int") => Distribution::IntUniform {
                    lo: num(2)? as i64,
                    hi: num(3)? as i64,
                    step: if t.len() > 4 { num(4)? as i64 } else { 1 },
                },
                Some("categorical") if t.len() == 3 => Distribution::Categorical(
                    t[2].split(',')
                        .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::from(v)))
                        .collect(),
                ),
                _ => return Err(bad(format!("line {}: cannot parse `{line}`", no + 1))),
            };
            params.push((t[0].to_string(), d));
        }
        let space = SearchSpace {
            family: family.ok_or_else(|| bad("missing `family` line".into()))?,
            params,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        let defaults = Hyperparams::default_for(self.family).to_map();
        for (name, d) in &self.params {
            if !defaults.contains_key(name) {
                return Err(TuneError::InvalidSpace(format!("{} has no parameter `{name}`", self.family)));
            }
            d.validate().map_err(TuneError::InvalidSpace)?;
        }
        Ok(())
    }

    /// Configuration of trial `t`; trial 0 is the family default.
    pub fn sample(&self, seed: u64, trial: usize) -> Result<Hyperparams, TuneError> {
        let base = Hyperparams::default_for(self.family);
        if trial == 0 {
            return Ok(base);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let values: Vec<(&str, Value)> = self.params.iter().map(|(n, d)| (n.as_str(), d.sample(&mut rng))).collect();
        Ok(base.with_overrides(values)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: Hyperparams,
    pub fold_accuracies: Vec<f64>,
    /// `None` when the trial failed.
    pub mean_accuracy: Option<f64>,
    pub rank: usize,
    pub seed: u64,
    pub error: Option<String>,
}

/// Evaluates `budget` configurations on one shared fold assignment and returns
/// them ranked by mean accuracy (ties by trial index, failures last).
pub fn random_search(
    space: &SearchSpace,
    dataset: &Dataset,
    budget: usize,
    k: usize,
    seed: u64,
    noise: &BTreeSet<String>,
) -> Result<Vec<TrialRecord>, TuneError> {
    if budget == 0 {
        return Err(TuneError::ZeroBudget);
    }
    space.validate()?;
    let folds = grouped_stratified_kfold(dataset, k, seed)?;
    let configs: Vec<Hyperparams> = (0..budget).map(|t| space.sample(seed, t)).collect::<Result<_, _>>()?;
    let mut records: Vec<TrialRecord> = configs
        .par_iter()
        .enumerate()
        .map(|(trial, &config)| {
            let outcome = cross_validate_with(&ClassifierSpec::new(config), dataset, &folds, noise);
            let (fold_accuracies, mean_accuracy, error) = match outcome {
                Ok(o) => {
                    let acc: Vec<f64> = o.report.folds.iter().map(|f| f.accuracy).collect();
                    (acc, Some(o.report.mean.accuracy), None)
                }
                Err(e) => {
                    log::warn!("trial {trial} failed: {e}");
                    (Vec::new(), None, Some(e.to_string()))
                }
            };
            TrialRecord {
                trial,
                config,
                fold_accuracies,
                mean_accuracy,
                rank: 0,
                seed,
                error,
            }
        })
        .collect();
    records.sort_by(|a, b| {
        let key = |r: &TrialRecord| r.mean_accuracy.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then(a.trial.cmp(&b.trial))
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(records)
}

/// One row per trial, in trial order.
pub fn trial_log_csv(records: &[TrialRecord]) -> String {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.trial);
    let Some(first) = sorted.first() else {
        return String::new();
    };
    let names: Vec<String> = first.config.to_map().keys().cloned().collect();
    let k = sorted.iter().map(|r| r.fold_accuracies.len()).max().unwrap_or(0);
    let mut s = format!("trial,rank,seed,{}", names.join(","));
    for f in 0..k {
        let _ = write!(s, ",fold{f}");
    }
    s.push_str(",mean_accuracy,error\n");
    for r in sorted {
        let map = r.config.to_map();
        let _ = write!(s, "{},{},{}", r.trial, r.rank, r.seed);
        for n in &names {
            let _ = write!(s, ",{}", map[n].to_string().trim_matches('"'));
        }
        for f in 0..k {
            match r.fold_accuracies.get(f) {
                Some(a) => {
                    let _ = write!(s, ",{a:.6}");
                }
                None => s.push(','),
            }
        }
        match r.mean_accuracy {
            Some(m) => {
                let _ = write!(s, ",{m:.6},");
            }
            None => s.push_str(",,"),
        }
        s.push_str(&r.error.clone().unwrap_or_default().replace(',', ";"));
        s.push('\n');
    }
    s
}
