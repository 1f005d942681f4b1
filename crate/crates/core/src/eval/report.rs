//! Tabular renderings of evaluation results (rows = learners, columns = metrics).

use std::fmt::Write as _;

use super::{BandReport, CvReport, MetricsReport};

fn pm(mean: Option<f64>, sd: Option<f64>) -> String {
    match (mean, sd) {
        (Some(m), Some(s)) if s.is_finite() => format!("{m:.3} ± {s:.3}"),
        (Some(m), _) => format!("{m:.3}"),
        (None, _) => "n/a".to_string(),
    }
}

/// Cross-validation table in `mean ± sd` form.
pub fn cv_table(reports: &[CvReport]) -> String {
    let mut s = format!(
        "{:<8}{:<18}{:<18}{:<18}{:<18}{:<18}\n",
        "Model", "Accuracy", "Sensitivity", "Specificity", "Brier", "AUC"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<8}{:<18}{:<18}{:<18}{:<18}{:<18}",
            r.learner,
            pm(Some(r.mean.accuracy), Some(r.sd.accuracy)),
            pm(r.mean.sensitivity, r.sd.sensitivity),
            pm(r.mean.specificity, r.sd.specificity),
            pm(Some(r.mean.brier), Some(r.sd.brier)),
            pm(r.mean.auc, r.sd.auc),
        );
    }
    s
}

/// One CSV row per learner and fold, plus `mean` and `sd` rows.
pub fn cv_csv(reports: &[CvReport]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
    let mut s = String::from("learner,fold,n,accuracy,sensitivity,specificity,brier,auc\n");
    for r in reports {
        for (f, m) in r.folds.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{f},{},{},{},{},{},{}",
                r.learner,
                m.n,
                m.accuracy,
                opt(m.sensitivity),
                opt(m.specificity),
                m.brier,
                opt(m.auc)
            );
        }
        for (tag, v) in [("mean", &r.mean), ("sd", &r.sd)] {
            let _ = writeln!(
                s,
                "{},{tag},,{},{},{},{},{}",
                r.learner,
                v.accuracy,
                opt(v.sensitivity),
                opt(v.specificity),
                v.brier,
                opt(v.auc)
            );
        }
    }
    s
}

/// Held-out evaluation table; accuracy carries its Agresti-Coull half-width.
pub fn metrics_table(rows: &[(&str, &MetricsReport)]) -> String {
    let f = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    let mut s = format!(
        "{:<8}{:<18}{:<14}{:<14}{:<10}{:<10}{:<8}\n",
        "Model", "Accuracy", "Sensitivity", "Specificity", "Brier", "AUC", "n"
    );
    for (name, m) in rows {
        let acc = match m.ci_accuracy {
            Some((lo, hi)) => format!("{:.3} ± {:.3}", m.accuracy, (hi - lo) / 2.0),
            None => format!("{:.3}", m.accuracy),
        };
        let _ = writeln!(
            s,
            "{:<8}{:<18}{:<14}{:<14}{:<10.3}{:<10}{:<8}",
            name,
            acc,
            f(m.sensitivity),
            f(m.specificity),
            m.brier,
            f(m.auc),
            m.n
        );
    }
    s
}

pub fn band_text(b: &BandReport) -> String {
    let mut s = format!("CRP band [{}, {}] mg/L\n", b.lo, b.hi);
    if b.is_empty() {
        s.push_str("  no cases in band\n");
        return s;
    }
    let _ = writeln!(
        s,
        "  cases {} ({} Bacteria, p_B = {:.3}; {} Virus, p_V = {:.3})",
        b.n_band, b.n_bacteria, b.p_b, b.n_virus, b.p_v
    );
    let _ = writeln!(s, "  random-diagnosis baseline   {:.5}", b.random_baseline);
    let _ = writeln!(s, "  prevalent-class baseline    {:.5}", b.prevalent_baseline);
    let mut rows = Vec::new();
    if let Some(m) = &b.model_metrics {
        rows.push(("model", m));
    }
    if let Some(m) = &b.rule_metrics {
        rows.push(("CRP", m));
    }
    s.push_str(&metrics_table(&rows));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::MetricSummary;

    #[test]
    fn cv_table_layout() {
        let m = MetricSummary {
            accuracy: 0.835,
            sensitivity: Some(0.8),
            specificity: Some(0.86),
            brier: 0.12,
            auc: None,
        };
        let sd = MetricSummary {
            accuracy: 0.01,
            ..m
        };
        let r = CvReport {
            learner: "XGB".into(),
            folds: vec![],
            mean: m,
            sd,
        };
        let t = cv_table(&[r.clone()]);
        assert!(t.lines().nth(1).unwrap().starts_with("XGB     0.835 ± 0.010"));
        assert!(t.contains("n/a"));
        assert!(cv_csv(&[r]).contains("XGB,mean,,0.835,0.8,0.86,0.12,"));
    }
}
