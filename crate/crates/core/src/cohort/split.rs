use serde::{Deserialize, Serialize};

use super::grouping::{group_by_patient, visiting_order, Bins};
use super::CohortError;
use crate::domain::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Result<Self, CohortError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(CohortError::InvalidConfig(format!(
                "test_fraction must be in (0,1), got {test_fraction}"
            )));
        }
        Ok(Self { test_fraction, seed })
    }
}

/// Patient-grouped, class-stratified train/test split.
///
/// Patients with any unlabeled case go to train, as do patients whose
/// labeled case count exceeds the test budget (`ceil(fraction * labeled)`).
/// Fails with `InfeasibleSplit` when several patients exist but none fits
/// the test budget.
pub fn grouped_stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), CohortError> {
    if dataset.is_empty() {
        return Err(CohortError::EmptyDataset);
    }
    let spec = SplitSpec::new(spec.test_fraction, spec.seed)?;
    let groups = group_by_patient(dataset, |_| true);
    let counts = dataset.class_counts();
    let f = spec.test_fraction;
    let budget = (f * counts.labeled() as f64).ceil() as usize;

    let candidates: Vec<usize> = (0..groups.len())
        .filter(|&g| groups[g].unlabeled == 0 && groups[g].labeled() > 0)
        .collect();
    if groups.len() >= 2 && !candidates.is_empty() && candidates.iter().all(|&g| groups[g].labeled() > budget) {
        let smallest = candidates.iter().map(|&g| groups[g].labeled()).min().unwrap_or(0);
        return Err(CohortError::InfeasibleSplit(format!(
            "smallest patient group has {smallest} labeled cases, test budget is {budget}"
        )));
    }

    // bin 0 = train, bin 1 = test
    let (b, v) = (counts.bacteria as f64, counts.virus as f64);
    let mut bins = Bins::new(vec![[(1.0 - f) * b, (1.0 - f) * v], [f * b, f * v]]);
    let mut side = vec![0usize; groups.len()];
    for g in visiting_order(&groups, spec.seed) {
        let group = &groups[g];
        let add = [group.bacteria as f64, group.virus as f64];
        let test_ok = group.unlabeled == 0 && group.labeled() > 0 && group.labeled() <= budget;
        let chosen = bins.best(add, |bin| bin == 0 || test_ok).unwrap_or(0);
        bins.add(chosen, add);
        side[g] = chosen;
    }

    let mut in_test = vec![false; dataset.len()];
    for (g, group) in groups.iter().enumerate() {
        if side[g] == 1 {
            for &i in &group.members {
                in_test[i] = true;
            }
        }
    }
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_test[i]).collect();
    let test: Vec<usize> = (0..dataset.len()).filter(|&i| in_test[i]).collect();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Label;
    use crate::testutil::{case, dataset_from};
    use std::collections::HashSet;

    #[test]
    fn single_patient_stays_whole() {
        let ds = dataset_from(vec![
            case("p", "c1", Label::Bacteria),
            case("p", "c2", Label::Virus),
            case("p", "c3", Label::Bacteria),
        ]);
        let (train, test) = grouped_stratified_split(&ds, &SplitSpec::new(0.5, 1).unwrap()).unwrap();
        assert!(train.len() == 3 && test.is_empty() || test.len() == 3 && train.is_empty());
    }

    #[test]
    fn hundred_singletons_balanced() {
        // Exhaustive over 50 seeds of the greedy assignment.
        let cases = (0..100)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Bacteria } else { Label::Virus };
                case(&format!("p{i}"), &format!("c{i}"), label)
            })
            .collect();
        let ds = dataset_from(cases);
        for seed in 0..50 {
            let (train, test) = grouped_stratified_split(&ds, &SplitSpec::new(0.2, seed).unwrap()).unwrap();
            assert_eq!(train.len() + test.len(), 100);
            assert!((18..=22).contains(&test.len()), "seed {seed}: {}", test.len());
            let c = test.class_counts();
            assert!((8..=12).contains(&c.bacteria) && (8..=12).contains(&c.virus));
        }
    }

    #[test]
    fn unlabeled_always_train_and_deterministic() {
        let mut cases = Vec::new();
        for i in 0..60 {
            let label = match i % 3 {
                0 => Label::Bacteria,
                1 => Label::Virus,
                _ => Label::Unlabeled,
            };
            cases.push(case(&format!("p{}", i / 2), &format!("c{i}"), label));
        }
        let ds = dataset_from(cases);
        let spec = SplitSpec::new(0.3, 9).unwrap();
        let (train, test) = grouped_stratified_split(&ds, &spec).unwrap();
        assert!(test.cases.iter().all(|c| c.label != Label::Unlabeled));
        let train_p: HashSet<_> = train.cases.iter().map(|c| &c.patient_id).collect();
        assert!(test.cases.iter().all(|c| !train_p.contains(&c.patient_id)));
        assert_eq!(grouped_stratified_split(&ds, &spec).unwrap(), (train, test));
    }

    #[test]
    fn infeasible_when_no_group_fits() {
        let mut cases = Vec::new();
        for i in 0..8 {
            cases.push(case("a", &format!("a{i}"), Label::Bacteria));
            cases.push(case("b", &format!("b{i}"), Label::Virus));
        }
        let ds = dataset_from(cases);
        assert!(matches!(
            grouped_stratified_split(&ds, &SplitSpec { test_fraction: 0.1, seed: 0 }),
            Err(CohortError::InfeasibleSplit(_))
        ));
    }

    #[test]
    fn bad_inputs() {
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(matches!(
            grouped_stratified_split(&Dataset::default(), &SplitSpec { test_fraction: 0.2, seed: 0 }),
            Err(CohortError::EmptyDataset)
        ));
    }
}
