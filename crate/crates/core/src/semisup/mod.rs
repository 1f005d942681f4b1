//! Pseudo-labeling of unlabeled cases and out-of-fold noise detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, Label, Provenance};
use crate::eval::{cross_validate, EvalError};
use crate::learners::{ClassifierSpec, LearnerError};

pub const DEFAULT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error)]
pub enum SemisupError {
    #[error("threshold {0} outside (0.5, 1)")]
    InvalidThreshold(f64),
    #[error("case {0} in the unlabeled pool carries a label")]
    NotUnlabeled(String),
    #[error("training data must contain both classes")]
    SingleClassData,
    #[error("noise case {0} is not in the labeled set")]
    NoiseNotSubset(String),
    #[error("{probas} probabilities for {cases} cases")]
    LengthMismatch { probas: usize, cases: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// Pseudo-labeled cases, sorted by case id.
    pub labeled_additions: Dataset,
    /// `(case_id, P(Bacteria))` of every addition, sorted by case id.
    pub added: Vec<(String, f64)>,
    /// `(case_id, P(Bacteria))` of rejected cases, sorted by case id.
    pub discarded: Vec<(String, f64)>,
    pub threshold: f64,
}

impl BootstrapOutcome {
    /// Audit CSV with one row per scored unlabeled case.
    pub fn to_csv(&self) -> String {
        let labels: BTreeMap<&str, Label> = self
            .labeled_additions
            .cases
            .iter()
            .map(|c| (c.case_id.as_str(), c.label))
            .collect();
        let mut rows: Vec<(&str, f64, &str)> = self
            .added
            .iter()
            .map(|(id, p)| (id.as_str(), *p, labels[id.as_str()].as_str()))
            .chain(self.discarded.iter().map(|(id, p)| (id.as_str(), *p, "discarded")))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut s = String::from("case_id,probability,decision\n");
        for (id, p, d) in rows {
            let _ = writeln!(s, "{id},{p:.6},{d}");
        }
        s
    }
}

fn check_threshold(threshold: f64) -> Result<(), SemisupError> {
    if threshold > 0.5 && threshold < 1.0 {
        Ok(())
    } else {
        Err(SemisupError::InvalidThreshold(threshold))
    }
}

/// The labeling decision alone: a case is kept when `max(p, 1 − p) > threshold`.
pub fn label_from_probabilities(
    unlabeled: &Dataset,
    probas: &[f64],
    threshold: f64,
) -> Result<BootstrapOutcome, SemisupError> {
    check_threshold(threshold)?;
    if probas.len() != unlabeled.len() {
        return Err(SemisupError::LengthMismatch {
            probas: probas.len(),
            cases: unlabeled.len(),
        });
    }
    let mut additions = Vec::new();
    let mut added = Vec::new();
    let mut discarded = Vec::new();
    for (case, &p) in unlabeled.cases.iter().zip(probas) {
        if case.label != Label::Unlabeled {
            return Err(SemisupError::NotUnlabeled(case.case_id.clone()));
        }
        if p.max(1.0 - p) > threshold {
            let mut c = case.clone();
            c.label = Label::from_positive(p >= 0.5);
            c.provenance = Provenance::BootstrapLabeled;
            additions.push(c);
            added.push((case.case_id.clone(), p));
        } else {
            discarded.push((case.case_id.clone(), p));
        }
    }
    additions.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    added.sort_by(|a, b| a.0.cmp(&b.0));
    discarded.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(BootstrapOutcome {
        labeled_additions: Dataset::new(additions),
        added,
        discarded,
        threshold,
    })
}

/// Fits `spec` on the labeled cases and keeps the confident pseudo-labels.
pub fn bootstrap_label(
    labeled: &Dataset,
    unlabeled: &Dataset,
    spec: &ClassifierSpec,
    threshold: f64,
    seed: u64,
) -> Result<BootstrapOutcome, SemisupError> {
    check_threshold(threshold)?;
    if let Some(c) = unlabeled.cases.iter().find(|c| c.label != Label::Unlabeled) {
        return Err(SemisupError::NotUnlabeled(c.case_id.clone()));
    }
    let labeled = labeled.labeled();
    let counts = labeled.class_counts();
    if counts.bacteria == 0 || counts.virus == 0 {
        return Err(SemisupError::SingleClassData);
    }
    if unlabeled.is_empty() {
        return label_from_probabilities(unlabeled, &[], threshold);
    }
    let model = spec.fit(&labeled.feature_matrix(), &labeled.targets(), seed)?;
    let probas = model.predict_matrix(&unlabeled.feature_matrix())?;
    label_from_probabilities(unlabeled, &probas, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSet {
    pub case_ids: BTreeSet<String>,
    pub detection_seed: u64,
    /// Out-of-fold P(Bacteria) of every scored labeled case.
    pub probabilities: BTreeMap<String, f64>,
}

impl NoiseSet {
    pub fn empty() -> Self {
        NoiseSet {
            case_ids: BTreeSet::new(),
            detection_seed: 0,
            probabilities: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.case_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.case_ids.is_empty()
    }

    pub fn contains(&self, case_id: &str) -> bool {
        self.case_ids.contains(case_id)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("case_id,probability,decision\n");
        for (id, p) in &self.probabilities {
            let d = if self.case_ids.contains(id) { "noise" } else { "kept" };
            let _ = writeln!(s, "{id},{p:.6},{d}");
        }
        s
    }
}

/// Labeled cases misclassified (at 0.5) by their out-of-fold prediction.
pub fn detect_noise(labeled: &Dataset, spec: &ClassifierSpec, k: usize, seed: u64) -> Result<NoiseSet, SemisupError> {
    let labeled = labeled.labeled();
    let out = cross_validate(spec, &labeled, k, seed, &BTreeSet::new())?;
    let mut case_ids = BTreeSet::new();
    let mut probabilities = BTreeMap::new();
    for (row, p) in out.scored() {
        let case = &labeled.cases[row];
        if (p >= 0.5) != (case.label == Label::Bacteria) {
            case_ids.insert(case.case_id.clone());
        }
        probabilities.insert(case.case_id.clone(), p);
    }
    Ok(NoiseSet {
        case_ids,
        detection_seed: seed,
        probabilities,
    })
}

/// Labeled cases plus pseudo-labeled additions; the noise set is returned alongside
/// so cross-validation can keep it out of training partitions.
pub fn assemble_training(
    labeled: &Dataset,
    noise: &NoiseSet,
    outcome: &BootstrapOutcome,
) -> Result<(Dataset, BTreeSet<String>), SemisupError> {
    let ids: BTreeSet<&str> = labeled.cases.iter().map(|c| c.case_id.as_str()).collect();
    if let Some(id) = noise.case_ids.iter().find(|id| !ids.contains(id.as_str())) {
        return Err(SemisupError::NoiseNotSubset(id.clone()));
    }
    let mut cases: Vec<_> = labeled.labeled().cases;
    cases.extend(
        outcome
            .labeled_additions
            .cases
            .iter()
            .filter(|c| !ids.contains(c.case_id.as_str()))
            .cloned(),
    );
    Ok((Dataset::new(cases), noise.case_ids.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Family, Hyperparams};
    use crate::testutil::{case_with_crp, dataset_from};

    fn pool(n: usize) -> Dataset {
        dataset_from((0..n).map(|i| case_with_crp(&format!("u{i}"), &format!("u{i}"), Label::Unlabeled, 5.0)).collect())
    }

    #[test]
    fn strict_threshold() {
        let out = label_from_probabilities(&pool(5), &[0.69, 0.70, 0.71, 0.30, 0.29], 0.70).unwrap();
        let ids: Vec<&str> = out.added.iter().map(|a| a.0.as_str()).collect();
        assert_eq!(ids, ["u2", "u4"]);
        assert_eq!(out.labeled_additions.cases[0].label, Label::Bacteria);
        assert_eq!(out.labeled_additions.cases[1].label, Label::Virus);
        assert!(out.labeled_additions.cases.iter().all(|c| c.provenance == Provenance::BootstrapLabeled));
        assert_eq!(out.discarded.len(), 3);
        assert!(out.to_csv().contains("u2,0.710000,BACTERIA\nu3,0.300000,discarded\n"));
    }

    #[test]
    fn threshold_domain() {
        for t in [0.5, 1.0, 0.2, f64::NAN] {
            assert!(matches!(label_from_probabilities(&pool(1), &[0.9], t), Err(SemisupError::InvalidThreshold(_))));
        }
        let empty = label_from_probabilities(&Dataset::default(), &[], 0.7).unwrap();
        assert!(empty.labeled_additions.is_empty() && empty.discarded.is_empty());
    }

    #[test]
    fn separable_pipeline() {
        let labeled = dataset_from(
            (0..60)
                .map(|i| {
                    let b = i % 2 == 0;
                    let crp = if b { 80.0 + i as f64 } else { 1.0 + (i % 5) as f64 };
                    case_with_crp(&format!("p{i}"), &format!("c{i}"), Label::from_positive(b), crp)
                })
                .collect(),
        );
        let spec = ClassifierSpec::new(Hyperparams::default_for(Family::Gbt).with_override_str("n_rounds=30").unwrap());
        let noise = detect_noise(&labeled, &spec, 5, 3).unwrap();
        assert!(noise.is_empty());
        assert_eq!(noise.probabilities.len(), 60);

        let unl = dataset_from(vec![
            case_with_crp("u1", "u1", Label::Unlabeled, 150.0),
            case_with_crp("u2", "u2", Label::Unlabeled, 2.0),
        ]);
        let out = bootstrap_label(&labeled, &unl, &spec, 0.7, 1).unwrap();
        assert_eq!(out.labeled_additions.len(), 2);
        let (train, n) = assemble_training(&labeled, &noise, &out).unwrap();
        assert_eq!(train.len(), 62);
        assert!(n.is_empty());
        assert!(train.cases.iter().all(|c| c.label != Label::Unlabeled));

        let mut bad = NoiseSet::empty();
        bad.case_ids.insert("nope".into());
        assert!(matches!(assemble_training(&labeled, &bad, &out), Err(SemisupError::NoiseNotSubset(_))));
        assert!(matches!(bootstrap_label(&labeled, &labeled, &spec, 0.7, 1), Err(SemisupError::NotUnlabeled(_))));
    }
}
