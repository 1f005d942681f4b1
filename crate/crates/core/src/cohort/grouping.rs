//! Greedy grouped-stratified assignment shared by the train/test split and
//! k-fold cross-validation.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{Dataset, Label};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PatientGroup {
    pub patient_id: String,
    pub members: Vec<usize>,
    pub bacteria: usize,
    pub virus: usize,
    pub unlabeled: usize,
}

impl PatientGroup {
    pub fn labeled(&self) -> usize {
        self.bacteria + self.virus
    }
}

/// Groups case indices by patient, in order of first appearance.
pub(crate) fn group_by_patient(dataset: &Dataset, include: impl Fn(usize) -> bool) -> Vec<PatientGroup> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<PatientGroup> = Vec::new();
    for (i, case) in dataset.cases.iter().enumerate() {
        if !include(i) {
            continue;
        }
        let g = *index.entry(case.patient_id.as_str()).or_insert_with(|| {
            groups.push(PatientGroup {
                patient_id: case.patient_id.clone(),
                members: Vec::new(),
                bacteria: 0,
                virus: 0,
                unlabeled: 0,
            });
            groups.len() - 1
        });
        let group = &mut groups[g];
        group.members.push(i);
        match case.label {
            Label::Bacteria => group.bacteria += 1,
            Label::Virus => group.virus += 1,
            Label::Unlabeled => group.unlabeled += 1,
        }
    }
    groups
}

/// Running per-bin class counts with per-bin targets.
#[derive(Debug, Clone)]
pub(crate) struct Bins {
    pub counts: Vec<[f64; 2]>,
    pub targets: Vec<[f64; 2]>,
}

impl Bins {
    pub fn new(targets: Vec<[f64; 2]>) -> Self {
        Self {
            counts: vec![[0.0; 2]; targets.len()],
            targets,
        }
    }

    /// Increase in squared deviation (per class and total size) when `add` joins `bin`.
    fn cost(&self, bin: usize, add: [f64; 2]) -> f64 {
        let c = self.counts[bin];
        let t = self.targets[bin];
        let mut delta = 0.0;
        for k in 0..2 {
            delta += (c[k] + add[k] - t[k]).powi(2) - (c[k] - t[k]).powi(2);
        }
        let size = c[0] + c[1];
        let target = t[0] + t[1];
        delta + (size + add[0] + add[1] - target).powi(2) - (size - target).powi(2)
    }

    pub fn add(&mut self, bin: usize, add: [f64; 2]) {
        self.counts[bin][0] += add[0];
        self.counts[bin][1] += add[1];
    }

    /// Lowest-cost bin among `allowed`; ties go to the lowest index.
    pub fn best(&self, add: [f64; 2], allowed: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for b in 0..self.targets.len() {
            if !allowed(b) {
                continue;
            }
            let c = self.cost(b, add);
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((b, c));
            }
        }
        best.map(|(b, _)| b)
    }
}

/// Visiting order: seeded shuffle, then stable sort by labeled size (largest first).
pub(crate) fn visiting_order(groups: &[PatientGroup], seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by_key(|&g| std::cmp::Reverse(groups[g].labeled()));
    order
}
