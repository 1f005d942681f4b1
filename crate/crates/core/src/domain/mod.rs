//! Canonical data model: analytes, blood panels, labels, cases and datasets.
//!
//! Every panel value is held in the canonical unit of its analyte (see
//! [`Analyte::canonical_unit`]). Raw measurements are brought into that form by
//! [`canonicalize`] using a [`UnitTable`].

mod units;
mod validate;

pub use units::{canonicalize, canonicalize_partial, to_raw, CanonicalizeError, RawMeasurement, UnitRule, UnitTable};
pub use validate::{validate_case, validate_record, ValidationReport, Violation};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numeric panel fields, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analyte {
    Wbc,
    NeutrophilsCount,
    LymphocyteCount,
    MonocyteCount,
    NeutrophilsPct,
    LymphocytePct,
    MonocytePct,
    Rbc,
    Hb,
    Hct,
    Mcv,
    Mch,
    Mchc,
    Rdw,
    PlateletCount,
    Mpv,
    Crp,
    Nlr,
    Age,
}

impl Analyte {
    pub const ALL: [Analyte; 19] = [
        Analyte::Wbc,
        Analyte::NeutrophilsCount,
        Analyte::LymphocyteCount,
        Analyte::MonocyteCount,
        Analyte::NeutrophilsPct,
        Analyte::LymphocytePct,
        Analyte::MonocytePct,
        Analyte::Rbc,
        Analyte::Hb,
        Analyte::Hct,
        Analyte::Mcv,
        Analyte::Mch,
        Analyte::Mchc,
        Analyte::Rdw,
        Analyte::PlateletCount,
        Analyte::Mpv,
        Analyte::Crp,
        Analyte::Nlr,
        Analyte::Age,
    ];

    /// The 17 laboratory measurements (16 CBC values and CRP).
    pub const MEASURED: [Analyte; 17] = [
        Analyte::Wbc,
        Analyte::NeutrophilsCount,
        Analyte::LymphocyteCount,
        Analyte::MonocyteCount,
        Analyte::NeutrophilsPct,
        Analyte::LymphocytePct,
        Analyte::MonocytePct,
        Analyte::Rbc,
        Analyte::Hb,
        Analyte::Hct,
        Analyte::Mcv,
        Analyte::Mch,
        Analyte::Mchc,
        Analyte::Rdw,
        Analyte::PlateletCount,
        Analyte::Mpv,
        Analyte::Crp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Analyte::Wbc => "wbc",
            Analyte::NeutrophilsCount => "neutrophils_count",
            Analyte::LymphocyteCount => "lymphocyte_count",
            Analyte::MonocyteCount => "monocyte_count",
            Analyte::NeutrophilsPct => "neutrophils_pct",
            Analyte::LymphocytePct => "lymphocyte_pct",
            Analyte::MonocytePct => "monocyte_pct",
            Analyte::Rbc => "rbc",
            Analyte::Hb => "hb",
            Analyte::Hct => "hct",
            Analyte::Mcv => "mcv",
            Analyte::Mch => "mch",
            Analyte::Mchc => "mchc",
            Analyte::Rdw => "rdw",
            Analyte::PlateletCount => "platelet_count",
            Analyte::Mpv => "mpv",
            Analyte::Crp => "crp",
            Analyte::Nlr => "nlr",
            Analyte::Age => "age",
        }
    }

    pub fn canonical_unit(self) -> &'static str {
        match self {
            Analyte::Wbc
            | Analyte::NeutrophilsCount
            | Analyte::LymphocyteCount
            | Analyte::MonocyteCount
            | Analyte::PlateletCount => "1E9/L",
            Analyte::Rbc => "1E12/L",
            Analyte::Hb | Analyte::Mchc => "g/L",
            Analyte::NeutrophilsPct
            | Analyte::LymphocytePct
            | Analyte::MonocytePct
            | Analyte::Hct
            | Analyte::Rdw
            | Analyte::Nlr => "1",
            Analyte::Mcv | Analyte::Mpv => "fL",
            Analyte::Mch => "pg/cell",
            Analyte::Crp => "mg/L",
            Analyte::Age => "years",
        }
    }

    pub fn from_name(name: &str) -> Option<Analyte> {
        Analyte::ALL.iter().copied().find(|a| a.name() == name)
    }

    /// Fraction-valued analytes, constrained to [0, 1].
    pub fn is_fraction(self) -> bool {
        matches!(
            self,
            Analyte::NeutrophilsPct | Analyte::LymphocytePct | Analyte::MonocytePct | Analyte::Hct | Analyte::Rdw
        )
    }
}

impl fmt::Display for Analyte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    /// Feature encoding: 0 = Female, 1 = Male.
    pub fn code(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Sex> {
        if code == 0.0 {
            Some(Sex::Female)
        } else if code == 1.0 {
            Some(Sex::Male)
        } else {
            None
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" | "1" => Some(Sex::Male),
            "f" | "female" | "0" => Some(Sex::Female),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Bacteria,
    Virus,
    Unlabeled,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BACTERIA" | "B" => Some(Label::Bacteria),
            "VIRUS" | "V" => Some(Label::Virus),
            "UNLABELED" | "UNLABELLED" | "U" | "" => Some(Label::Unlabeled),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bacteria => "BACTERIA",
            Label::Virus => "VIRUS",
            Label::Unlabeled => "UNLABELED",
        }
    }

    /// Bacteria is the positive class.
    pub fn is_positive(self) -> Option<bool> {
        match self {
            Label::Bacteria => Some(true),
            Label::Virus => Some(false),
            Label::Unlabeled => None,
        }
    }

    pub fn from_positive(positive: bool) -> Label {
        if positive {
            Label::Bacteria
        } else {
            Label::Virus
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Clinical,
    BootstrapLabeled,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Clinical => "clinical",
            Provenance::BootstrapLabeled => "bootstrap",
            Provenance::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Provenance> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clinical" | "" => Some(Provenance::Clinical),
            "bootstrap" | "bootstrap_labeled" | "bootstraplabeled" => Some(Provenance::BootstrapLabeled),
            "synthetic" => Some(Provenance::Synthetic),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("division by zero: lymphocyte_count is 0, NLR undefined")]
    DivisionByZero,
    #[error("panel is missing fields: {0:?}")]
    Incomplete(Vec<String>),
}

/// A complete blood panel in canonical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloodPanel {
    values: [f64; 19],
    pub sex: Sex,
}

impl BloodPanel {
    /// Builds a panel from values ordered as [`Analyte::ALL`]. No validation.
    pub fn from_values(values: [f64; 19], sex: Sex) -> Self {
        Self { values, sex }
    }

    pub fn values(&self) -> &[f64; 19] {
        &self.values
    }

    pub fn get(&self, analyte: Analyte) -> f64 {
        self.values[analyte.index()]
    }

    pub fn set(&mut self, analyte: Analyte, value: f64) {
        self.values[analyte.index()] = value;
    }

    /// Completes a partial panel; every analyte except NLR must be present.
    /// A missing NLR is derived.
    pub fn from_partial(partial: &PartialPanel) -> Result<Self, DomainError> {
        let missing = partial.missing_fields();
        if !missing.is_empty() {
            return Err(DomainError::Incomplete(missing));
        }
        let mut values = [0.0; 19];
        for a in Analyte::ALL {
            if let Some(v) = partial.get(a) {
                values[a.index()] = v;
            }
        }
        let panel = BloodPanel {
            values,
            sex: partial.sex.expect("checked by missing_fields"),
        };
        if partial.get(Analyte::Nlr).is_none() {
            derive_features(&panel)
        } else {
            Ok(panel)
        }
    }

    pub fn to_partial(&self) -> PartialPanel {
        let mut p = PartialPanel::default();
        for a in Analyte::ALL {
            p.values.insert(a, self.get(a));
        }
        p.sex = Some(self.sex);
        p
    }

    /// The model feature vector in [`FEATURE_ORDER`].
    pub fn features(&self) -> Vec<f64> {
        FEATURE_ORDER.iter().map(|f| f.value(self)).collect()
    }
}

impl Index<Analyte> for BloodPanel {
    type Output = f64;

    fn index(&self, analyte: Analyte) -> &f64 {
        &self.values[analyte.index()]
    }
}

/// Sets NLR = neutrophils_count / lymphocyte_count; other fields unchanged.
pub fn derive_features(panel: &BloodPanel) -> Result<BloodPanel, DomainError> {
    let lymph = panel.get(Analyte::LymphocyteCount);
    if lymph == 0.0 {
        return Err(DomainError::DivisionByZero);
    }
    let mut out = panel.clone();
    out.set(Analyte::Nlr, panel.get(Analyte::NeutrophilsCount) / lymph);
    Ok(out)
}

/// A panel that may be missing fields; the form raw records take before filtering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialPanel {
    pub values: BTreeMap<Analyte, f64>,
    pub sex: Option<Sex>,
}

impl PartialPanel {
    pub fn get(&self, analyte: Analyte) -> Option<f64> {
        self.values.get(&analyte).copied()
    }

    /// Required fields that are absent. NLR is derivable and never reported.
    pub fn missing_fields(&self) -> Vec<String> {
        let mut missing: Vec<String> = Analyte::ALL
            .iter()
            .filter(|a| **a != Analyte::Nlr && !self.values.contains_key(a))
            .map(|a| a.name().to_string())
            .collect();
        if self.sex.is_none() {
            missing.push("sex".to_string());
        }
        missing
    }
}

/// One model input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Analyte(Analyte),
    Sex,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::Analyte(a) => a.name(),
            Feature::Sex => "sex",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Feature::Analyte(a) => a.canonical_unit(),
            Feature::Sex => "0=F,1=M",
        }
    }

    pub fn value(self, panel: &BloodPanel) -> f64 {
        match self {
            Feature::Analyte(a) => panel.get(a),
            Feature::Sex => panel.sex.code(),
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        if name == "sex" {
            Some(Feature::Sex)
        } else {
            Analyte::from_name(name).map(Feature::Analyte)
        }
    }
}

/// The 19 model inputs: 16 CBC values, CRP, age and sex.
pub const FEATURE_ORDER: [Feature; 19] = [
    Feature::Analyte(Analyte::Wbc),
    Feature::Analyte(Analyte::NeutrophilsCount),
    Feature::Analyte(Analyte::LymphocyteCount),
    Feature::Analyte(Analyte::MonocyteCount),
    Feature::Analyte(Analyte::NeutrophilsPct),
    Feature::Analyte(Analyte::LymphocytePct),
    Feature::Analyte(Analyte::MonocytePct),
    Feature::Analyte(Analyte::Rbc),
    Feature::Analyte(Analyte::Hb),
    Feature::Analyte(Analyte::Hct),
    Feature::Analyte(Analyte::Mcv),
    Feature::Analyte(Analyte::Mch),
    Feature::Analyte(Analyte::Mchc),
    Feature::Analyte(Analyte::Rdw),
    Feature::Analyte(Analyte::PlateletCount),
    Feature::Analyte(Analyte::Mpv),
    Feature::Analyte(Analyte::Crp),
    Feature::Analyte(Analyte::Age),
    Feature::Sex,
];

pub fn feature_index(feature: Feature) -> Option<usize> {
    FEATURE_ORDER.iter().position(|f| *f == feature)
}

pub fn feature_names() -> Vec<String> {
    FEATURE_ORDER.iter().map(|f| f.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub patient_id: String,
    pub case_id: String,
    pub panel: BloodPanel,
    pub label: Label,
    pub provenance: Provenance,
}

/// A case whose panel may still be incomplete.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub patient_id: String,
    pub case_id: String,
    pub panel: PartialPanel,
    pub label: Label,
    pub provenance: Provenance,
}

impl From<&Case> for CaseRecord {
    fn from(case: &Case) -> Self {
        CaseRecord {
            patient_id: case.patient_id.clone(),
            case_id: case.case_id.clone(),
            panel: case.panel.to_partial(),
            label: case.label,
            provenance: case.provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub bacteria: usize,
    pub virus: usize,
    pub unlabeled: usize,
}

impl ClassCounts {
    pub fn labeled(&self) -> usize {
        self.bacteria + self.virus
    }
}

/// Ordered cases. Feature order is the crate-wide [`FEATURE_ORDER`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub cases: Vec<Case>,
}

impl Dataset {
    pub fn new(cases: Vec<Case>) -> Self {
        Self { cases }
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for case in &self.cases {
            match case.label {
                Label::Bacteria => c.bacteria += 1,
                Label::Virus => c.virus += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn feature_matrix(&self) -> crate::matrix::Matrix {
        crate::matrix::Matrix::from_rows(self.cases.iter().map(|c| c.panel.features()).collect::<Vec<_>>().as_slice())
    }

    /// Positive-class indicators; panics on unlabeled cases.
    pub fn targets(&self) -> Vec<bool> {
        self.cases
            .iter()
            .map(|c| c.label.is_positive().expect("targets() on unlabeled case"))
            .collect()
    }

    pub fn labeled(&self) -> Dataset {
        self.filter(|c| c.label != Label::Unlabeled)
    }

    pub fn unlabeled(&self) -> Dataset {
        self.filter(|c| c.label == Label::Unlabeled)
    }

    pub fn filter(&self, keep: impl Fn(&Case) -> bool) -> Dataset {
        Dataset::new(self.cases.iter().filter(|c| keep(c)).cloned().collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(indices.iter().map(|&i| self.cases[i].clone()).collect())
    }

    pub fn column(&self, analyte: Analyte) -> Vec<f64> {
        self.cases.iter().map(|c| c.panel.get(analyte)).collect()
    }
}
