use serde::{Deserialize, Serialize};

use super::{metrics::evaluate, CrpRule, EvalError, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub lo: f64,
    pub hi: f64,
    pub n_band: usize,
    pub n_bacteria: usize,
    pub n_virus: usize,
    pub p_b: f64,
    pub p_v: f64,
    /// Accuracy of guessing each class with its band frequency.
    pub random_baseline: f64,
    /// Accuracy of always answering the band's majority class.
    pub prevalent_baseline: f64,
    pub model_metrics: Option<MetricsReport>,
    pub rule_metrics: Option<MetricsReport>,
}

impl BandReport {
    pub fn is_empty(&self) -> bool {
        self.n_band == 0
    }
}

/// `(random, prevalent)` baselines for a Bacteria share `p_b`.
pub fn baselines(p_b: f64) -> (f64, f64) {
    let p_v = 1.0 - p_b;
    (p_b * p_b + p_v * p_v, p_b.max(p_v))
}

/// Band composition, baselines, and model vs rule metrics on cases with
/// `lo ≤ crp ≤ hi`.
pub fn band_analysis(
    crp: &[f64],
    labels: &[bool],
    model_probas: &[f64],
    rule: &CrpRule,
    lo: f64,
    hi: f64,
) -> Result<BandReport, EvalError> {
    if crp.len() != labels.len() || model_probas.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            probas: model_probas.len(),
            labels: labels.len(),
        });
    }
    if !(lo <= hi) {
        return Err(EvalError::InvalidBand { lo, hi });
    }
    let idx: Vec<usize> = (0..crp.len()).filter(|&i| crp[i] >= lo && crp[i] <= hi).collect();
    let n_band = idx.len();
    let n_bacteria = idx.iter().filter(|&&i| labels[i]).count();
    let n_virus = n_band - n_bacteria;
    if n_band == 0 {
        log::warn!("CRP band [{lo}, {hi}] holds no cases");
        return Ok(BandReport {
            lo,
            hi,
            n_band,
            n_bacteria,
            n_virus,
            p_b: f64::NAN,
            p_v: f64::NAN,
            random_baseline: f64::NAN,
            prevalent_baseline: f64::NAN,
            model_metrics: None,
            rule_metrics: None,
        });
    }
    let p_b = n_bacteria as f64 / n_band as f64;
    let p_v = n_virus as f64 / n_band as f64;
    let (random_baseline, prevalent_baseline) = baselines(p_b);
    let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
    let p: Vec<f64> = idx.iter().map(|&i| model_probas[i]).collect();
    let c: Vec<f64> = idx.iter().map(|&i| crp[i]).collect();
    Ok(BandReport {
        lo,
        hi,
        n_band,
        n_bacteria,
        n_virus,
        p_b,
        p_v,
        random_baseline,
        prevalent_baseline,
        model_metrics: Some(evaluate(&p, &y, 0.5)?),
        rule_metrics: Some(rule.evaluate(&c, &y)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_arithmetic() {
        let (r, p) = baselines(0.485);
        assert!((r - 0.50045).abs() < 1e-12);
        assert!((p - 0.515).abs() < 1e-12);
        assert_eq!(baselines(0.5), (0.5, 0.5));
        for i in 0..=100 {
            let (r, p) = baselines(i as f64 / 100.0);
            assert!(r <= p + 1e-15);
        }
    }

    #[test]
    fn inclusive_bounds_and_virus_only() {
        let rule = CrpRule::new(24.0).unwrap();
        let crp = [9.99, 10.0, 40.0, 40.01];
        let rep = band_analysis(&crp, &[true, false, false, true], &[0.1, 0.2, 0.3, 0.9], &rule, 10.0, 40.0).unwrap();
        assert_eq!((rep.n_band, rep.n_virus, rep.p_v, rep.random_baseline), (2, 2, 1.0, 1.0));
        assert_eq!(rep.rule_metrics.unwrap().accuracy, 0.5);
        let empty = band_analysis(&crp, &[true; 4], &[0.5; 4], &rule, 50.0, 60.0).unwrap();
        assert!(empty.is_empty() && empty.model_metrics.is_none());
    }
}
