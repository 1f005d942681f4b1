use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cohort::grouping::{group_by_patient, visiting_order, Bins};
use crate::domain::{Case, Dataset, Label, Provenance};

/// Cases that are scored in validation folds: clinically labeled ones.
pub fn eval_eligible(case: &Case) -> bool {
    case.label != Label::Unlabeled && case.provenance != Provenance::BootstrapLabeled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub fold_of_case: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.fold_of_case.get(case_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.fold_of_case.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Patient-grouped, class-stratified k-fold assignment of the eligible cases.
pub fn grouped_stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let groups = group_by_patient(dataset, |i| eval_eligible(&dataset.cases[i]));
    if groups.len() < k {
        return Err(EvalError::TooFewGroups { groups: groups.len(), k });
    }
    let b: usize = groups.iter().map(|g| g.bacteria).sum();
    let v: usize = groups.iter().map(|g| g.virus).sum();
    let target = [b as f64 / k as f64, v as f64 / k as f64];
    let mut bins = Bins::new(vec![target; k]);
    let mut fold_of_case = BTreeMap::new();
    for g in visiting_order(&groups, seed) {
        let group = &groups[g];
        let add = [group.bacteria as f64, group.virus as f64];
        let fold = bins.best(add, |_| true).expect("k ≥ 2 bins");
        bins.add(fold, add);
        for &i in &group.members {
            fold_of_case.insert(dataset.cases[i].case_id.clone(), fold);
        }
    }
    Ok(FoldAssignment { k, seed, fold_of_case })
}

/// Row indices of one CV fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Training and validation rows for every fold.
///
/// Validation holds the fold's eligible cases, noise cases included. Training
/// holds every other labeled case (pseudo-labeled ones too) except noise
/// cases and any case whose patient sits in the validation fold.
pub fn cv_partitions(
    dataset: &Dataset,
    folds: &FoldAssignment,
    noise: &BTreeSet<String>,
) -> Result<Vec<Partition>, EvalError> {
    let ids: HashSet<&str> = dataset.cases.iter().map(|c| c.case_id.as_str()).collect();
    if let Some(missing) = noise.iter().find(|id| !ids.contains(id.as_str())) {
        return Err(EvalError::NoiseNotSubset(missing.clone()));
    }
    let mut patients_in_fold: Vec<HashSet<&str>> = vec![HashSet::new(); folds.k];
    let mut fold_of_row = vec![None; dataset.len()];
    for (i, case) in dataset.cases.iter().enumerate() {
        if !eval_eligible(case) {
            continue;
        }
        let f = folds
            .fold_of(&case.case_id)
            .ok_or_else(|| EvalError::UnassignedCase(case.case_id.clone()))?;
        if f >= folds.k {
            return Err(EvalError::UnassignedCase(case.case_id.clone()));
        }
        fold_of_row[i] = Some(f);
        patients_in_fold[f].insert(case.patient_id.as_str());
    }
    Ok((0..folds.k)
        .map(|f| {
            let mut p = Partition {
                train: Vec::new(),
                validation: Vec::new(),
            };
            for (i, case) in dataset.cases.iter().enumerate() {
                if fold_of_row[i] == Some(f) {
                    p.validation.push(i);
                } else if case.label != Label::Unlabeled
                    && !noise.contains(&case.case_id)
                    && !patients_in_fold[f].contains(case.patient_id.as_str())
                {
                    p.train.push(i);
                }
            }
            p
        })
        .collect())
}
