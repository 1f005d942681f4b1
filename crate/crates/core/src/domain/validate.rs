use std::fmt;

use super::{Analyte, Case, CaseRecord, Label, Provenance};

/// Relative tolerance for a supplied NLR against neutrophils / lymphocytes.
const NLR_REL_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_missing(&self) -> bool {
        self.violations.iter().any(|v| v.message == "missing field")
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle) || v.field == needle)
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }
}

pub fn validate_case(case: &Case) -> ValidationReport {
    validate_record(&CaseRecord::from(case))
}

/// Lists every missing field and every violated panel invariant. Never fails.
pub fn validate_record(record: &CaseRecord) -> ValidationReport {
    let mut report = ValidationReport::default();
    for field in record.panel.missing_fields() {
        report.push(&field, "missing field");
    }
    for (&analyte, &v) in &record.panel.values {
        let name = analyte.name();
        if !v.is_finite() {
            report.push(name, format!("{name} is not finite"));
            continue;
        }
        match analyte {
            Analyte::Hct => {
                if !(v > 0.0 && v < 1.0) {
                    report.push(name, "hct in (0,1)");
                }
            }
            Analyte::Age => {
                if !(18.0..=120.0).contains(&v) {
                    report.push(name, "age in [18,120]");
                }
            }
            a if a.is_fraction() => {
                if !(0.0..=1.0).contains(&v) {
                    report.push(name, format!("{name} in [0,1]"));
                }
            }
            _ => {
                if v < 0.0 {
                    report.push(name, format!("{name} ≥ 0"));
                }
            }
        }
    }
    if let (Some(nlr), Some(neut), Some(lymph)) = (
        record.panel.get(Analyte::Nlr),
        record.panel.get(Analyte::NeutrophilsCount),
        record.panel.get(Analyte::LymphocyteCount),
    ) {
        if lymph > 0.0 && nlr.is_finite() {
            let expected = neut / lymph;
            if (nlr - expected).abs() > NLR_REL_TOL * expected.abs().max(1e-12) {
                report.push("nlr", "nlr = neutrophils_count / lymphocyte_count");
            }
        }
    }
    if record.provenance == Provenance::BootstrapLabeled && record.label == Label::Unlabeled {
        report.push("label", "bootstrap-labeled case cannot be unlabeled");
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BloodPanel, Sex};

    fn valid_case() -> Case {
        let mut values = [0.0; 19];
        let v = [
            8.1, 5.33, 1.38, 0.56, 0.693, 0.182, 0.076, 4.37, 132.0, 0.393, 90.2, 30.2, 333.0, 0.138, 210.0, 8.5, 23.0,
            0.0, 62.0,
        ];
        values.copy_from_slice(&v);
        values[Analyte::Nlr.index()] = 5.33 / 1.38;
        Case {
            patient_id: "p1".into(),
            case_id: "c1".into(),
            panel: BloodPanel::from_values(values, Sex::Female),
            label: Label::Virus,
            provenance: Provenance::Clinical,
        }
    }

    #[test]
    fn complete_case_is_clean() {
        assert!(validate_case(&valid_case()).is_empty());
    }

    #[test]
    fn negative_crp_flagged_not_clamped() {
        let mut c = valid_case();
        c.panel.set(Analyte::Crp, -1.0);
        let r = validate_case(&c);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].message, "crp ≥ 0");
        assert_eq!(c.panel.get(Analyte::Crp), -1.0);
    }

    #[test]
    fn missing_hb_reported() {
        let mut rec = CaseRecord::from(&valid_case());
        rec.panel.values.remove(&Analyte::Hb);
        let r = validate_record(&rec);
        assert!(r.has_missing());
        assert!(r.violations.iter().any(|v| v.field == "hb" && v.message == "missing field"));
    }

    #[test]
    fn every_violation_listed() {
        let mut c = valid_case();
        c.panel.set(Analyte::Hct, 1.0);
        c.panel.set(Analyte::Age, 12.0);
        c.panel.set(Analyte::LymphocytePct, 1.5);
        c.panel.set(Analyte::Nlr, 99.0);
        let r = validate_case(&c);
        for needle in ["hct in (0,1)", "age in [18,120]", "lymphocyte_pct in [0,1]", "nlr = "] {
            assert!(r.mentions(needle), "{needle} not in {:?}", r);
        }
        assert_eq!(r.violations.len(), 4);
    }
}
