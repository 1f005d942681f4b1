use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{cv_partitions, grouped_stratified_kfold, FoldAssignment};
use super::{evaluate, fit_crp_rule, EvalError, MetricsReport};
use crate::domain::{Analyte, Dataset};
use crate::learners::ClassifierSpec;

/// Anything that can be trained on one partition and score another.
pub trait FoldLearner: Sync {
    fn name(&self) -> String;
    fn fit_predict(&self, train: &Dataset, validation: &Dataset, seed: u64) -> Result<Vec<f64>, EvalError>;
}

impl FoldLearner for ClassifierSpec {
    fn name(&self) -> String {
        self.family().to_string()
    }

    fn fit_predict(&self, train: &Dataset, validation: &Dataset, seed: u64) -> Result<Vec<f64>, EvalError> {
        let model = self.fit(&train.feature_matrix(), &train.targets(), seed)?;
        Ok(model.predict_matrix(&validation.feature_matrix())?)
    }
}

/// The CRP threshold rule, refitted on each training partition.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrpRuleLearner;

impl FoldLearner for CrpRuleLearner {
    fn name(&self) -> String {
        "CRP".to_string()
    }

    fn fit_predict(&self, train: &Dataset, validation: &Dataset, _seed: u64) -> Result<Vec<f64>, EvalError> {
        fit_crp_rule(train)?.scores(&validation.column(Analyte::Crp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub brier: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub learner: String,
    pub folds: Vec<MetricsReport>,
    pub mean: MetricSummary,
    /// Sample (n−1) standard deviations.
    pub sd: MetricSummary,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd)
}

fn optional(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let (m, s) = mean_sd(&v);
    (Some(m), (v.len() > 1).then_some(s))
}

impl CvReport {
    /// Aggregates per-fold reports; folds lacking a metric are left out of its mean.
    pub fn from_folds(learner: String, folds: Vec<MetricsReport>) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let brier: Vec<f64> = folds.iter().map(|f| f.brier).collect();
        let (am, asd) = mean_sd(&acc);
        let (bm, bsd) = mean_sd(&brier);
        let (sm, ssd) = optional(folds.iter().map(|f| f.sensitivity));
        let (pm, psd) = optional(folds.iter().map(|f| f.specificity));
        let (um, usd) = optional(folds.iter().map(|f| f.auc));
        CvReport {
            learner,
            mean: MetricSummary {
                accuracy: am,
                sensitivity: sm,
                specificity: pm,
                brier: bm,
                auc: um,
            },
            sd: MetricSummary {
                accuracy: asd,
                sensitivity: ssd,
                specificity: psd,
                brier: bsd,
                auc: usd,
            },
            folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub report: CvReport,
    /// Out-of-fold probability per dataset row (`None` for rows never validated).
    pub predictions: Vec<Option<f64>>,
    pub fold_of_row: Vec<Option<usize>>,
}

impl CvOutcome {
    /// Rows with an out-of-fold prediction, as `(row, probability)`.
    pub fn scored(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.predictions.iter().enumerate().filter_map(|(i, p)| p.map(|p| (i, p)))
    }
}

pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(fold as u64)
}

pub fn cross_validate(
    learner: &dyn FoldLearner,
    dataset: &Dataset,
    k: usize,
    seed: u64,
    noise: &BTreeSet<String>,
) -> Result<CvOutcome, EvalError> {
    let folds = grouped_stratified_kfold(dataset, k, seed)?;
    cross_validate_with(learner, dataset, &folds, noise)
}

/// Cross-validation over a given fold assignment, so several learners can share folds.
pub fn cross_validate_with(
    learner: &dyn FoldLearner,
    dataset: &Dataset,
    folds: &FoldAssignment,
    noise: &BTreeSet<String>,
) -> Result<CvOutcome, EvalError> {
    let parts = cv_partitions(dataset, folds, noise)?;
    let results: Vec<(Vec<usize>, Vec<f64>, MetricsReport)> = parts
        .par_iter()
        .enumerate()
        .map(|(f, p)| {
            let train = dataset.subset(&p.train);
            let valid = dataset.subset(&p.validation);
            let probas = learner.fit_predict(&train, &valid, fold_seed(folds.seed, f))?;
            let metrics = evaluate(&probas, &valid.targets(), 0.5)?;
            Ok((p.validation.clone(), probas, metrics))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut predictions = vec![None; dataset.len()];
    let mut fold_of_row = vec![None; dataset.len()];
    let mut reports = Vec::with_capacity(results.len());
    for (f, (rows, probas, metrics)) in results.into_iter().enumerate() {
        for (r, p) in rows.into_iter().zip(probas) {
            predictions[r] = Some(p);
            fold_of_row[r] = Some(f);
        }
        reports.push(metrics);
    }
    Ok(CvOutcome {
        report: CvReport::from_folds(learner.name(), reports),
        predictions,
        fold_of_row,
    })
}
