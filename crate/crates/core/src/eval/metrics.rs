use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub threshold: f64,
    pub accuracy: f64,
    /// `None` when the data has no Bacteria cases.
    pub sensitivity: Option<f64>,
    /// `None` when the data has no Virus cases.
    pub specificity: Option<f64>,
    pub brier: f64,
    pub auc: Option<f64>,
    pub ci_accuracy: Option<(f64, f64)>,
}

fn check_inputs(probas: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if probas.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            probas: probas.len(),
            labels: labels.len(),
        });
    }
    if probas.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Accuracy, sensitivity, specificity and Brier score at `threshold`
/// (`proba ≥ threshold` means Bacteria). AUC and the interval are left unset.
pub fn classification_metrics(probas: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport, EvalError> {
    check_inputs(probas, labels)?;
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    let mut sq = 0.0;
    for (&p, &y) in probas.iter().zip(labels) {
        let yv = if y { 1.0 } else { 0.0 };
        sq += (p - yv) * (p - yv);
        match (p >= threshold, y) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = probas.len();
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(MetricsReport {
        n,
        threshold,
        accuracy: (tp + tn) as f64 / n as f64,
        sensitivity: ratio(tp, fneg),
        specificity: ratio(tn, fp),
        brier: sq / n as f64,
        auc: None,
        ci_accuracy: None,
    })
}

/// Full report: metrics, AUC (when both classes are present) and a 95 %
/// Agresti-Coull interval on accuracy.
pub fn evaluate(probas: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport, EvalError> {
    let mut m = classification_metrics(probas, labels, threshold)?;
    m.auc = match roc_auc(probas, labels) {
        Ok((_, auc)) => Some(auc),
        Err(EvalError::SingleClassData) => None,
        Err(e) => return Err(e),
    };
    let correct = (m.accuracy * m.n as f64).round() as usize;
    m.ci_accuracy = Some(agresti_coull(correct, m.n, 0.95)?);
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `≥ threshold` are called positive at this point.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Curve point of the default 0.5 operating threshold.
    pub operating_point: RocPoint,
}

/// Midrank AUC and the empirical ROC curve.
pub fn roc_auc(probas: &[f64], labels: &[bool]) -> Result<(RocCurve, f64), EvalError> {
    check_inputs(probas, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassData);
    }
    if probas.iter().any(|p| p.is_nan()) {
        return Err(EvalError::NonFinite);
    }
    let ranks = crate::stats::midranks(probas);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y).map(|(r, _)| r).sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    let mut order: Vec<usize> = (0..probas.len()).collect();
    order.sort_by(|&a, &b| probas[b].total_cmp(&probas[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = probas[order[i]];
        while i < order.len() && probas[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
            threshold: t,
        });
    }
    let operating_point = *points
        .iter()
        .rev()
        .find(|p| p.threshold >= 0.5)
        .unwrap_or(&points[0]);
    Ok((RocCurve { points, operating_point }, auc))
}

/// Agresti-Coull interval for a binomial proportion, clipped to [0, 1].
pub fn agresti_coull(successes: usize, n: usize, confidence: f64) -> Result<(f64, f64), EvalError> {
    if n == 0 || successes > n {
        return Err(EvalError::InvalidCounts { successes, n });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::InvalidConfidence(confidence));
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let z2 = z * z;
    let nt = n as f64 + z2;
    let pt = (successes as f64 + z2 / 2.0) / nt;
    let half = z * (pt * (1.0 - pt) / nt).sqrt();
    Ok(((pt - half).max(0.0), (pt + half).min(1.0)))
}
