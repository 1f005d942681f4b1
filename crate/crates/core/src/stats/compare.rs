//! Pairwise learner comparison and two-population descriptive tables.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{
    anderson_darling_k, bonferroni, cohen_d, iqr, mann_whitney_u, median, paired_t, wilcoxon_signed_rank, Alternative,
    EffectLabel, StatsError,
};
use crate::domain::{Dataset, Label, FEATURE_ORDER};
use crate::eval::CvReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareMetric {
    Accuracy,
    Brier,
}

impl CompareMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareMetric::Accuracy => "accuracy",
            CompareMetric::Brier => "brier",
        }
    }

    fn per_fold(self, report: &CvReport) -> Vec<f64> {
        report
            .folds
            .iter()
            .map(|f| match self {
                CompareMetric::Accuracy => f.accuracy,
                CompareMetric::Brier => f.brier,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub first: String,
    pub second: String,
    pub metric: CompareMetric,
    pub mean_difference: f64,
    pub t_p: f64,
    pub t_p_adjusted: f64,
    pub wilcoxon_p: f64,
    pub wilcoxon_p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    /// Bonferroni multiplier: the number of tests of each kind.
    pub m: usize,
    pub alternative: Alternative,
    pub rows: Vec<PairRow>,
}

/// Every unordered pair of reports, tested on per-fold accuracy and Brier score.
/// Differences are `first − second`.
pub fn compare_reports(reports: &[CvReport], alternative: Alternative) -> Result<ComparisonTable, StatsError> {
    let mut rows = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            for metric in [CompareMetric::Accuracy, CompareMetric::Brier] {
                let a = metric.per_fold(&reports[i]);
                let b = metric.per_fold(&reports[j]);
                let t = paired_t(&a, &b, alternative)?;
                let w = wilcoxon_signed_rank(&a, &b, alternative)?;
                let n = a.len() as f64;
                rows.push(PairRow {
                    first: reports[i].learner.clone(),
                    second: reports[j].learner.clone(),
                    metric,
                    mean_difference: a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / n,
                    t_p: t.p_value,
                    t_p_adjusted: 0.0,
                    wilcoxon_p: w.p_value,
                    wilcoxon_p_adjusted: 0.0,
                });
            }
        }
    }
    let m = rows.len();
    let t_adj = bonferroni(&rows.iter().map(|r| r.t_p).collect::<Vec<_>>(), m);
    let w_adj = bonferroni(&rows.iter().map(|r| r.wilcoxon_p).collect::<Vec<_>>(), m);
    for (k, row) in rows.iter_mut().enumerate() {
        row.t_p_adjusted = t_adj[k];
        row.wilcoxon_p_adjusted = w_adj[k];
    }
    Ok(ComparisonTable { m, alternative, rows })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("first,second,metric,mean_difference,t_p,t_p_adjusted,wilcoxon_p,wilcoxon_p_adjusted,m\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6e},{:.6e},{:.6e},{:.6e},{}",
                r.first,
                r.second,
                r.metric.as_str(),
                r.mean_difference,
                r.t_p,
                r.t_p_adjusted,
                r.wilcoxon_p,
                r.wilcoxon_p_adjusted,
                self.m
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("pairwise tests ({:?}), Bonferroni m = {}\n", self.alternative, self.m);
        let _ = writeln!(s, "{:<16} {:<9} {:>10} {:>10} {:>10}", "pair", "metric", "diff", "t p(adj)", "W p(adj)");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} {:<9} {:>10.4} {:>10.4} {:>10.4}",
                format!("{}-{}", r.first, r.second),
                r.metric.as_str(),
                r.mean_difference,
                r.t_p_adjusted,
                r.wilcoxon_p_adjusted
            );
        }
        s
    }
}

/// One feature's Bacteria vs Virus summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub feature: String,
    pub bacteria_median: f64,
    pub bacteria_iqr: f64,
    pub virus_median: f64,
    pub virus_iqr: f64,
    pub mwu_p: f64,
    pub ad_p: f64,
    pub cohen_d: f64,
    pub effect: EffectLabel,
}

/// Per-feature medians, IQRs, Mann-Whitney and Anderson-Darling p-values and effect sizes
/// over the labeled cases of `ds`.
pub fn population_table(ds: &Dataset, n_permutations: usize, seed: u64) -> Result<Vec<PopulationRow>, StatsError> {
    FEATURE_ORDER
        .iter()
        .map(|&feature| {
            let pick = |label: Label| -> Vec<f64> {
                ds.cases
                    .iter()
                    .filter(|c| c.label == label)
                    .map(|c| feature.value(&c.panel))
                    .collect()
            };
            let b = pick(Label::Bacteria);
            let v = pick(Label::Virus);
            if b.is_empty() || v.is_empty() {
                return Err(StatsError::EmptySample);
            }
            let effect = cohen_d(&b, &v)?;
            Ok(PopulationRow {
                feature: feature.name().to_string(),
                bacteria_median: median(&b),
                bacteria_iqr: iqr(&b),
                virus_median: median(&v),
                virus_iqr: iqr(&v),
                mwu_p: mann_whitney_u(&b, &v, Alternative::TwoSided)?.p_value,
                ad_p: anderson_darling_k(&[&b, &v], n_permutations, seed)?.p_value,
                cohen_d: effect.d,
                effect: effect.label,
            })
        })
        .collect()
}

pub fn population_csv(rows: &[PopulationRow]) -> String {
    let mut s = String::from("feature,bacteria_median,bacteria_iqr,virus_median,virus_iqr,mwu_p,ad_p,cohen_d,effect\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e},{:.4},{}",
            r.feature,
            r.bacteria_median,
            r.bacteria_iqr,
            r.virus_median,
            r.virus_iqr,
            r.mwu_p,
            r.ad_p,
            r.cohen_d,
            r.effect.symbol()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CvReport, MetricsReport};

    fn report(name: &str, acc: &[f64]) -> CvReport {
        let folds = acc
            .iter()
            .map(|&a| MetricsReport {
                n: 100,
                threshold: 0.5,
                accuracy: a,
                sensitivity: None,
                specificity: None,
                brier: 1.0 - a,
                auc: None,
                ci_accuracy: None,
            })
            .collect();
        CvReport::from_folds(name.to_string(), folds)
    }

    #[test]
    fn pairs_and_adjustment() {
        let r = [
            report("A", &[0.8, 0.82, 0.85, 0.81]),
            report("B", &[0.7, 0.71, 0.72, 0.74]),
            report("C", &[0.6, 0.65, 0.61, 0.66]),
        ];
        let t = compare_reports(&r, Alternative::Greater).unwrap();
        assert_eq!(t.m, 6);
        assert_eq!(t.rows.len(), 6);
        for row in &t.rows {
            assert!((row.t_p_adjusted - (row.t_p * 6.0).min(1.0)).abs() < 1e-15);
            assert!((row.wilcoxon_p_adjusted - (row.wilcoxon_p * 6.0).min(1.0)).abs() < 1e-15);
        }
        let ab = &t.rows[0];
        assert_eq!((ab.first.as_str(), ab.second.as_str(), ab.metric), ("A", "B", CompareMetric::Accuracy));
        // all four differences positive: exact one-sided W p = 1/16
        assert!((ab.wilcoxon_p - 1.0 / 16.0).abs() < 1e-15);
        assert!(t.to_csv().lines().all(|l| l.ends_with(",6") || l.starts_with("first")));
    }
}
