//! Small fixtures shared by unit tests.

use crate::domain::{derive_features, Analyte, BloodPanel, Case, Dataset, Label, Provenance, Sex};

/// Typical adult medians as a valid panel.
pub fn median_panel() -> BloodPanel {
    let mut values = [0.0; 19];
    let v = [
        8.1, 5.33, 1.38, 0.56, 0.693, 0.182, 0.076, 4.37, 132.0, 0.393, 90.2, 30.2, 333.0, 0.138, 210.0, 8.5, 23.0,
        0.0, 62.0,
    ];
    values.copy_from_slice(&v);
    derive_features(&BloodPanel::from_values(values, Sex::Female)).expect("lymphocytes > 0")
}

pub fn case(patient: &str, id: &str, label: Label) -> Case {
    Case {
        patient_id: patient.to_string(),
        case_id: id.to_string(),
        panel: median_panel(),
        label,
        provenance: Provenance::Clinical,
    }
}

pub fn case_with_crp(patient: &str, id: &str, label: Label, crp: f64) -> Case {
    let mut c = case(patient, id, label);
    c.panel.set(Analyte::Crp, crp);
    c
}

pub fn dataset_from(cases: Vec<Case>) -> Dataset {
    Dataset::new(cases)
}
