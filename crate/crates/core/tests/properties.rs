//! Property tests over public invariants.

use proptest::prelude::*;

use virobac::cohort::{generate_cohort, generate_range, GeneratorConfig};
use virobac::eval::{baselines, classification_metrics, roc_auc, CvReport};
use virobac::explain::{shapley_exact, shapley_sampled, FnPredictor};
use virobac::matrix::Matrix;
use virobac::stats::{bonferroni, mann_whitney_u, midranks, wilcoxon_signed_rank, Alternative};
use virobac::trees::{fit_gbt, BoostParams};

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0u8..20, any::<bool>()), 2..120)
        .prop_map(|v| {
            let p: Vec<f64> = v.iter().map(|p| p.0 as f64 / 19.0).collect();
            let y: Vec<bool> = v.iter().map(|p| p.1).collect();
            (p, y)
        })
        .prop_filter("both classes", |(_, y)| y.iter().any(|&b| b) && y.iter().any(|&b| !b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roc_is_monotone_and_anchored((p, y) in scored_labels()) {
        let (curve, auc) = roc_auc(&p, &y).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        prop_assert!(curve.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn metrics_ignore_row_order((p, y) in scored_labels(), rotate in 0usize..50) {
        let k = rotate % p.len();
        let (mut p2, mut y2) = (p.clone(), y.clone());
        p2.rotate_left(k);
        y2.rotate_left(k);
        let a = classification_metrics(&p, &y, 0.5).unwrap();
        let b = classification_metrics(&p2, &y2, 0.5).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!((a.brier - b.brier).abs() < 1e-12);
        prop_assert_eq!(roc_auc(&p, &y).unwrap().1, roc_auc(&p2, &y2).unwrap().1);
    }

    #[test]
    fn random_baseline_never_beats_prevalent(p_b in 0.0f64..=1.0) {
        let (random, prevalent) = baselines(p_b);
        prop_assert!(random <= prevalent + 1e-15);
        if (p_b - 0.5).abs() > 1e-9 {
            prop_assert!(random < prevalent);
        }
    }

    #[test]
    fn midranks_sum_to_triangular(v in prop::collection::vec(0u8..10, 1..60)) {
        let x: Vec<f64> = v.iter().map(|&a| a as f64).collect();
        let n = x.len() as f64;
        let sum: f64 = midranks(&x).iter().sum();
        prop_assert!((sum - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn one_sided_tails_cover_everything(
        a in prop::collection::vec(0u8..12, 2..9),
        b in prop::collection::vec(0u8..12, 2..9),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let g = mann_whitney_u(&a, &b, Alternative::Greater).unwrap().p_value;
        let l = mann_whitney_u(&a, &b, Alternative::Less).unwrap().p_value;
        prop_assert!(g + l >= 1.0 - 1e-12);
        let n = a.len().min(b.len());
        let wg = wilcoxon_signed_rank(&a[..n], &b[..n], Alternative::Greater).unwrap().p_value;
        let wl = wilcoxon_signed_rank(&a[..n], &b[..n], Alternative::Less).unwrap().p_value;
        prop_assert!(wg + wl >= 1.0 - 1e-12);
    }

    #[test]
    fn bonferroni_is_monotone_and_capped(p in prop::collection::vec(0.0f64..=1.0, 1..10), extra in 0usize..5) {
        let adj = bonferroni(&p, p.len() + extra);
        for (raw, a) in p.iter().zip(&adj) {
            prop_assert!(*a >= *raw && *a <= 1.0);
        }
    }

    #[test]
    fn cv_summary_recomputes_from_folds(acc in prop::collection::vec(0.0f64..=1.0, 2..12)) {
        let folds: Vec<_> = acc
            .iter()
            .map(|&a| {
                let mut m = classification_metrics(&[1.0, 0.0], &[true, false], 0.5).unwrap();
                m.accuracy = a;
                m
            })
            .collect();
        let r = CvReport::from_folds("x".into(), folds);
        let n = acc.len() as f64;
        let mean = acc.iter().sum::<f64>() / n;
        let sd = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        prop_assert!((r.mean.accuracy - mean).abs() < 1e-12);
        prop_assert!((r.sd.accuracy - sd).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// For a linear model the interventional Shapley value has the closed form
    /// `w_j · (x_j − mean background_j)`. The sampled estimator hits it exactly
    /// once every background row is used by the same number of permutation pairs.
    #[test]
    fn shapley_matches_linear_closed_form(
        w in prop::collection::vec(-2.0f64..2.0, 2..7),
        seed_rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 7), 1..12),
        x in prop::collection::vec(-3.0f64..3.0, 7),
    ) {
        let nf = w.len();
        let rows: Vec<Vec<f64>> = seed_rows.iter().map(|r| r[..nf].to_vec()).collect();
        let bg = Matrix::from_rows(&rows);
        let x = &x[..nf];
        let weights = w.clone();
        let model = FnPredictor { n_features: nf, f: move |v: &[f64]| v.iter().zip(&weights).map(|(a, b)| a * b).sum() };
        let exact = shapley_exact(&model, x, &bg).unwrap();
        let sampled = shapley_sampled(&model, x, &bg, 6 * rows.len(), 3).unwrap();
        for j in 0..nf {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
            let oracle = w[j] * (x[j] - mean);
            prop_assert!((exact.phi[j] - oracle).abs() < 1e-9);
            prop_assert!((sampled.phi[j] - oracle).abs() < 1e-9);
        }
        prop_assert!(exact.efficiency_residual().abs() < 1e-9);
        prop_assert!(sampled.efficiency_residual().abs() < 1e-9);
    }

    #[test]
    fn gbt_probabilities_are_valid_and_seeded(
        rows in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, any::<bool>()), 8..60),
        seed in 0u64..1000,
    ) {
        prop_assume!(rows.iter().any(|r| r.2) && rows.iter().any(|r| !r.2));
        let x = Matrix::from_rows(&rows.iter().map(|r| [r.0, r.1]).collect::<Vec<_>>());
        let y: Vec<bool> = rows.iter().map(|r| r.2).collect();
        let params = BoostParams { n_rounds: 15, subsample_rows: 0.8, seed, ..Default::default() };
        let a = fit_gbt(&x, &y, &params).unwrap();
        prop_assert_eq!(&a, &fit_gbt(&x, &y, &params).unwrap());
        for t in &a.trees {
            prop_assert!(t.validate(2).is_ok());
        }
        for i in 0..x.n_rows() {
            let p = a.predict_proba(x.row(i)).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}

#[test]
fn cohort_is_partition_invariant() {
    let config = GeneratorConfig::builtin();
    let whole = generate_cohort(&config, 300, 9).unwrap();
    let mut pieces = generate_range(&config, 0..120, 9).unwrap();
    pieces.extend(generate_range(&config, 120..300, 9).unwrap());
    assert_eq!(whole.cases, pieces);
    assert_ne!(whole.cases, generate_cohort(&config, 300, 10).unwrap().cases);
}
