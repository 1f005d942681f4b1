use serde::{Deserialize, Serialize};

use super::{metrics::evaluate, EvalError, MetricsReport};
use crate::domain::{Analyte, Dataset, Label};

/// Single-threshold CRP baseline: Virus below the threshold, Bacteria at or above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrpRule {
    pub threshold: f64,
}

impl CrpRule {
    pub fn new(threshold: f64) -> Result<Self, EvalError> {
        if !(threshold >= 0.0) {
            return Err(EvalError::NegativeCrp(threshold));
        }
        Ok(CrpRule { threshold })
    }

    pub fn predict(&self, crp: f64) -> Result<Label, EvalError> {
        if !(crp >= 0.0) {
            return Err(EvalError::NegativeCrp(crp));
        }
        Ok(if crp < self.threshold { Label::Virus } else { Label::Bacteria })
    }

    /// Hard score: 1 for Bacteria, 0 for Virus.
    pub fn score(&self, crp: f64) -> Result<f64, EvalError> {
        Ok(if self.predict(crp)?.is_positive() == Some(true) { 1.0 } else { 0.0 })
    }

    pub fn scores(&self, crp: &[f64]) -> Result<Vec<f64>, EvalError> {
        crp.iter().map(|&c| self.score(c)).collect()
    }

    pub fn evaluate(&self, crp: &[f64], labels: &[bool]) -> Result<MetricsReport, EvalError> {
        evaluate(&self.scores(crp)?, labels, 0.5)
    }
}

/// Accuracy-maximizing threshold over 0, the midpoints of consecutive
/// distinct CRP values, and +∞. Ties keep the smallest threshold.
/// Returns the rule and its training accuracy.
pub fn fit_crp_rule_values(crp: &[f64], labels: &[bool]) -> Result<(CrpRule, f64), EvalError> {
    if crp.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            probas: crp.len(),
            labels: labels.len(),
        });
    }
    if let Some(&c) = crp.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
        return Err(EvalError::NegativeCrp(c));
    }
    let n_b = labels.iter().filter(|&&y| y).count();
    if n_b == 0 || n_b == labels.len() {
        return Err(EvalError::SingleClassData);
    }
    let mut order: Vec<usize> = (0..crp.len()).collect();
    order.sort_by(|&a, &b| crp[a].total_cmp(&crp[b]));
    // At threshold 0 every case is called Bacteria.
    let mut correct = n_b as i64;
    let mut best = (correct, 0.0);
    let mut i = 0;
    while i < order.len() {
        let v = crp[order[i]];
        while i < order.len() && crp[order[i]] == v {
            correct += if labels[order[i]] { -1 } else { 1 };
            i += 1;
        }
        let threshold = match order.get(i) {
            Some(&next) => {
                let hi = crp[next];
                let m = v + (hi - v) / 2.0;
                if m > v {
                    m
                } else {
                    hi
                }
            }
            None => f64::INFINITY,
        };
        if correct > best.0 {
            best = (correct, threshold);
        }
    }
    Ok((CrpRule { threshold: best.1 }, best.0 as f64 / crp.len() as f64))
}

/// Fits on the labeled cases of a dataset.
pub fn fit_crp_rule(dataset: &Dataset) -> Result<CrpRule, EvalError> {
    let labeled = dataset.labeled();
    fit_crp_rule_values(&labeled.column(Analyte::Crp), &labeled.targets()).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_example() {
        let (r, acc) = fit_crp_rule_values(&[3.0, 5.0, 30.0, 50.0], &[false, false, true, true]).unwrap();
        assert_eq!(r.threshold, 17.5);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn prediction_boundaries() {
        let r = CrpRule::new(24.0).unwrap();
        assert_eq!(r.predict(23.0).unwrap(), Label::Virus);
        assert_eq!(r.predict(24.0).unwrap(), Label::Bacteria);
        assert_eq!(r.predict(0.0).unwrap(), Label::Virus);
        assert!(r.predict(-1.0).is_err());
        assert!(CrpRule::new(-0.5).is_err());
    }

    #[test]
    fn sentinels() {
        let (r, _) = fit_crp_rule_values(&[10.0, 20.0, 30.0], &[true, true, false]).unwrap();
        assert_eq!(r.threshold, 0.0);
        let (r, _) = fit_crp_rule_values(&[10.0, 20.0, 30.0, 40.0, 50.0], &[false, false, true, false, false]).unwrap();
        assert_eq!(r.threshold, f64::INFINITY);
        assert!(matches!(fit_crp_rule_values(&[1.0], &[true]), Err(EvalError::SingleClassData)));
    }

    fn brute_force(crp: &[f64], y: &[bool]) -> f64 {
        let mut cands: Vec<f64> = crp.to_vec();
        cands.push(f64::INFINITY);
        cands
            .iter()
            .map(|&t| crp.iter().zip(y).filter(|(&c, &b)| (c >= t) == b).count())
            .max()
            .unwrap() as f64
            / crp.len() as f64
    }

    proptest! {
        #[test]
        fn matches_brute_force(data in prop::collection::vec((0u32..60, any::<bool>()), 2..80)) {
            let crp: Vec<f64> = data.iter().map(|d| d.0 as f64 * 1.5).collect();
            let y: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
            let (rule, acc) = fit_crp_rule_values(&crp, &y).unwrap();
            prop_assert_eq!(acc, brute_force(&crp, &y));
            let achieved = crp.iter().zip(&y).filter(|(&c, &b)| (c >= rule.threshold) == b).count() as f64 / crp.len() as f64;
            prop_assert_eq!(achieved, acc);
        }
    }
}
