use std::collections::BTreeSet;

use thiserror::Error;

use super::{Analyte, BloodPanel, DomainError, PartialPanel, Sex};

const DEFAULT_TABLE: &str = include_str!("../../data/units.txt");
const TABLE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CanonicalizeError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown unit `{unit}` for parameter `{parameter}`")]
    UnknownUnit { parameter: String, unit: String },
    #[error("parameter `{0}` given more than once")]
    DuplicateParameter(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{0}` is not a finite number")]
    NonFiniteValue(String),
    #[error("sex must be coded 0 (female) or 1 (male), got {0}")]
    InvalidSexCode(f64),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("unit table line {line}: {message}")]
    MalformedTable { line: usize, message: String },
    #[error("unit table version {0} is not supported")]
    UnsupportedTableVersion(u32),
}

/// One `(name, value, unit)` triple as it arrives from a lab system.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurement {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

impl RawMeasurement {
    pub fn new(name: impl Into<String>, value: f64, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            unit: unit.into(),
        }
    }
}

/// Converts `source_unit` values of a parameter into its canonical unit.
/// The first alias is the canonical parameter key.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRule {
    pub parameter_aliases: Vec<String>,
    pub source_unit: String,
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    Analyte(Analyte),
    Sex,
}

impl Target {
    fn from_key(key: &str) -> Option<Target> {
        if key == "sex" {
            return Some(Target::Sex);
        }
        Analyte::ALL
            .iter()
            .copied()
            .find(|a| normalize_name(a.name()) == key)
            .map(Target::Analyte)
    }

    fn name(self) -> &'static str {
        match self {
            Target::Analyte(a) => a.name(),
            Target::Sex => "sex",
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledRule {
    target: Target,
    aliases: Vec<String>,
    unit: String,
    factor: f64,
}

/// A set of [`UnitRule`]s with alias and unit lookup.
#[derive(Debug, Clone)]
pub struct UnitTable {
    rules: Vec<UnitRule>,
    compiled: Vec<CompiledRule>,
}

/// Lower-cases and drops whitespace and punctuation, keeping `%` and `#`
/// because they distinguish percentages and absolute counts.
fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric() || *c == '%' || *c == '#')
        .flat_map(char::to_lowercase)
        .collect()
}

fn normalize_unit(unit: &str) -> String {
    unit.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

impl UnitTable {
    pub fn new(rules: Vec<UnitRule>) -> Result<Self, CanonicalizeError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            let line = i + 1;
            let key = rule
                .parameter_aliases
                .first()
                .map(|a| normalize_name(a))
                .ok_or(CanonicalizeError::MalformedTable {
                    line,
                    message: "rule has no aliases".into(),
                })?;
            let target = Target::from_key(&key).ok_or_else(|| CanonicalizeError::MalformedTable {
                line,
                message: format!("`{key}` is not a known parameter"),
            })?;
            if !(rule.factor > 0.0 && rule.factor.is_finite()) {
                return Err(CanonicalizeError::MalformedTable {
                    line,
                    message: format!("factor must be > 0, got {}", rule.factor),
                });
            }
            compiled.push(CompiledRule {
                target,
                aliases: rule.parameter_aliases.iter().map(|a| normalize_name(a)).collect(),
                unit: normalize_unit(&rule.source_unit),
                factor: rule.factor,
            });
        }
        // Canonical units must convert with factor 1.
        for a in Analyte::ALL {
            let unit = normalize_unit(a.canonical_unit());
            let ok = compiled
                .iter()
                .any(|r| r.target == Target::Analyte(a) && r.unit == unit && r.factor == 1.0);
            if !ok {
                return Err(CanonicalizeError::MalformedTable {
                    line: 0,
                    message: format!("no identity rule for {} [{}]", a.name(), a.canonical_unit()),
                });
            }
        }
        Ok(Self { rules, compiled })
    }

    /// Text form: a `version N` line, then `aliases | unit | factor` per line.
    pub fn parse(text: &str) -> Result<Self, CanonicalizeError> {
        let mut rules = Vec::new();
        let mut version = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if version.is_none() {
                let v = line
                    .strip_prefix("version")
                    .and_then(|rest| rest.trim().parse::<u32>().ok())
                    .ok_or_else(|| CanonicalizeError::MalformedTable {
                        line: i + 1,
                        message: "expected `version N` header".into(),
                    })?;
                if v != TABLE_VERSION {
                    return Err(CanonicalizeError::UnsupportedTableVersion(v));
                }
                version = Some(v);
                continue;
            }
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(CanonicalizeError::MalformedTable {
                    line: i + 1,
                    message: "expected `aliases | unit | factor`".into(),
                });
            }
            let factor: f64 = fields[2].parse().map_err(|_| CanonicalizeError::MalformedTable {
                line: i + 1,
                message: format!("bad factor `{}`", fields[2]),
            })?;
            rules.push(UnitRule {
                parameter_aliases: fields[0].split(',').map(|s| s.trim().to_string()).collect(),
                source_unit: fields[1].to_string(),
                factor,
            });
        }
        if version.is_none() {
            return Err(CanonicalizeError::MalformedTable {
                line: 0,
                message: "empty unit table".into(),
            });
        }
        Self::new(rules)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TABLE).expect("shipped unit table is valid")
    }

    pub fn default_text() -> &'static str {
        DEFAULT_TABLE
    }

    pub fn rules(&self) -> &[UnitRule] {
        &self.rules
    }

    fn resolve(&self, name: &str) -> Option<Target> {
        let key = normalize_name(name);
        self.compiled.iter().find(|r| r.aliases.contains(&key)).map(|r| r.target)
    }

    fn factor(&self, target: Target, unit: &str) -> Option<f64> {
        let unit = normalize_unit(unit);
        self.compiled
            .iter()
            .find(|r| r.target == target && r.unit == unit)
            .map(|r| r.factor)
    }

    /// Canonical parameter name and conversion factor for a raw `(name, unit)`.
    pub fn lookup(&self, name: &str, unit: &str) -> Result<(&'static str, f64), CanonicalizeError> {
        let target = self
            .resolve(name)
            .ok_or_else(|| CanonicalizeError::UnknownParameter(name.to_string()))?;
        let factor = self.factor(target, unit).ok_or_else(|| CanonicalizeError::UnknownUnit {
            parameter: name.to_string(),
            unit: unit.to_string(),
        })?;
        Ok((target.name(), factor))
    }
}

/// Resolves aliases and converts units without requiring completeness.
pub fn canonicalize_partial(raw: &[RawMeasurement], table: &UnitTable) -> Result<PartialPanel, CanonicalizeError> {
    let mut seen = BTreeSet::new();
    let mut panel = PartialPanel::default();
    for m in raw {
        let target = table
            .resolve(&m.name)
            .ok_or_else(|| CanonicalizeError::UnknownParameter(m.name.clone()))?;
        let factor = table.factor(target, &m.unit).ok_or_else(|| CanonicalizeError::UnknownUnit {
            parameter: m.name.clone(),
            unit: m.unit.clone(),
        })?;
        if !seen.insert(target) {
            return Err(CanonicalizeError::DuplicateParameter(m.name.clone()));
        }
        if !m.value.is_finite() {
            return Err(CanonicalizeError::NonFiniteValue(m.name.clone()));
        }
        match target {
            Target::Sex => {
                panel.sex = Some(Sex::from_code(m.value).ok_or(CanonicalizeError::InvalidSexCode(m.value))?);
            }
            Target::Analyte(a) => {
                panel.values.insert(a, m.value * factor);
            }
        }
    }
    Ok(panel)
}

/// Builds a complete canonical panel; NLR is derived when not supplied.
pub fn canonicalize(raw: &[RawMeasurement], table: &UnitTable) -> Result<BloodPanel, CanonicalizeError> {
    let partial = canonicalize_partial(raw, table)?;
    if let Some(first) = partial.missing_fields().into_iter().next() {
        return Err(CanonicalizeError::MissingParameter(first));
    }
    Ok(BloodPanel::from_partial(&partial)?)
}

/// The panel as canonical raw triples; feeding these back through
/// [`canonicalize`] is the identity.
pub fn to_raw(panel: &BloodPanel) -> Vec<RawMeasurement> {
    let mut out: Vec<RawMeasurement> = super::Analyte::ALL
        .iter()
        .map(|a| RawMeasurement::new(a.name(), panel.get(*a), a.canonical_unit()))
        .collect();
    out.push(RawMeasurement::new("sex", panel.sex.code(), "code"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::derive_features;
    use proptest::prelude::*;

    fn full_raw() -> Vec<RawMeasurement> {
        vec![
            RawMeasurement::new("WBC", 8.1, "1E9/L"),
            RawMeasurement::new("Neutrophils count", 5.33, "1E9/L"),
            RawMeasurement::new("Lymphocyte count", 1.38, "10^9/L"),
            RawMeasurement::new("Monocyte count", 0.56, "1E9/L"),
            RawMeasurement::new("Neutrophils %", 69.3, "%"),
            RawMeasurement::new("Lymphocyte %", 18.2, "%"),
            RawMeasurement::new("Monocyte %", 0.076, "1"),
            RawMeasurement::new("RBC", 4.37, "1E12/L"),
            RawMeasurement::new("Hb", 13.2, "g/dL"),
            RawMeasurement::new("Hct", 0.393, "1"),
            RawMeasurement::new("MCV", 90.2, "fL"),
            RawMeasurement::new("MCH", 30.2, "pg"),
            RawMeasurement::new("MCHC", 333.0, "g/L"),
            RawMeasurement::new("RDW", 13.8, "%"),
            RawMeasurement::new("Platelet count", 210.0, "1E9/L"),
            RawMeasurement::new("MPV", 8.5, "fL"),
            RawMeasurement::new("CRP", 2.3, "mg/dL"),
            RawMeasurement::new("Age", 62.0, "years"),
            RawMeasurement::new("Sex", 1.0, "code"),
        ]
    }

    #[test]
    fn unit_conversions() {
        let t = UnitTable::builtin();
        let p = canonicalize(&full_raw(), &t).unwrap();
        assert!((p.get(Analyte::Crp) - 23.0).abs() < 1e-12);
        assert!((p.get(Analyte::Hb) - 132.0).abs() < 1e-12);
        assert_eq!(p.get(Analyte::Wbc), 8.1);
        assert!((p.get(Analyte::NeutrophilsPct) - 0.693).abs() < 1e-12);
        assert!((p.get(Analyte::Rdw) - 0.138).abs() < 1e-12);
        assert_eq!(p.sex, Sex::Male);
        assert!((p.get(Analyte::Nlr) - 5.33 / 1.38).abs() < 1e-12);
    }

    #[test]
    fn alias_matching_ignores_case_and_punctuation() {
        let t = UnitTable::builtin();
        assert_eq!(t.lookup("c-reactive protein", "MG/DL").unwrap(), ("crp", 10.0));
        assert_eq!(t.lookup("  neutrophils_count ", "1e9/l").unwrap().0, "neutrophils_count");
        assert_eq!(t.lookup("NEUTROPHILS %", "%").unwrap().0, "neutrophils_pct");
    }

    #[test]
    fn errors_name_the_offender() {
        let t = UnitTable::builtin();
        let mut raw = full_raw();
        raw.push(RawMeasurement::new("ferritin", 1.0, "ug/L"));
        assert_eq!(
            canonicalize(&raw, &t),
            Err(CanonicalizeError::UnknownParameter("ferritin".into()))
        );

        let mut raw = full_raw();
        raw[16] = RawMeasurement::new("CRP", 2.3, "furlongs");
        assert_eq!(
            canonicalize(&raw, &t),
            Err(CanonicalizeError::UnknownUnit {
                parameter: "CRP".into(),
                unit: "furlongs".into()
            })
        );

        let mut raw = full_raw();
        raw.push(RawMeasurement::new("c reactive protein", 23.0, "mg/L"));
        assert_eq!(
            canonicalize(&raw, &t),
            Err(CanonicalizeError::DuplicateParameter("c reactive protein".into()))
        );

        let mut raw = full_raw();
        raw.remove(8);
        assert_eq!(canonicalize(&raw, &t), Err(CanonicalizeError::MissingParameter("hb".into())));
    }

    #[test]
    fn nlr_kept_when_supplied() {
        let t = UnitTable::builtin();
        let mut raw = full_raw();
        raw.push(RawMeasurement::new("NLR", 3.9, "1"));
        assert_eq!(canonicalize(&raw, &t).unwrap().get(Analyte::Nlr), 3.9);
    }

    #[test]
    fn table_parsing_errors() {
        assert!(matches!(
            UnitTable::parse("version 2\n"),
            Err(CanonicalizeError::UnsupportedTableVersion(2))
        ));
        assert!(matches!(
            UnitTable::parse("crp | mg/L | 1\n"),
            Err(CanonicalizeError::MalformedTable { .. })
        ));
        let bad = format!("{}\ncrp | mg/dL | -1\n", DEFAULT_TABLE);
        assert!(matches!(UnitTable::parse(&bad), Err(CanonicalizeError::MalformedTable { .. })));
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(
            counts in prop::array::uniform4(0.05f64..30.0),
            crp in 0.0f64..400.0,
            age in 18.0f64..120.0,
            male in any::<bool>(),
        ) {
            let t = UnitTable::builtin();
            let mut raw = full_raw();
            raw[0].value = counts[0];
            raw[1].value = counts[1];
            raw[2].value = counts[2];
            raw[3].value = counts[3];
            raw[16] = RawMeasurement::new("crp", crp, "mg/L");
            raw[17].value = age;
            raw[18].value = if male { 1.0 } else { 0.0 };
            let once = canonicalize(&raw, &t).unwrap();
            let twice = canonicalize(&to_raw(&once), &t).unwrap();
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn nlr_commutes_with_canonicalize(neut in 0.01f64..40.0, lymph in 0.01f64..20.0) {
            // Counts given in 1E3/uL (factor 1) and per-litre forms give the same ratio.
            let t = UnitTable::builtin();
            let mut raw = full_raw();
            raw[1] = RawMeasurement::new("neutrophils count", neut, "1E3/uL");
            raw[2] = RawMeasurement::new("lymphocyte count", lymph, "1E3/uL");
            let canon = canonicalize(&raw, &t).unwrap();
            let derived_after = derive_features(&canon).unwrap();
            prop_assert_eq!(canon.get(Analyte::Nlr), derived_after.get(Analyte::Nlr));
            prop_assert!((canon.get(Analyte::Nlr) - neut / lymph).abs() <= 1e-12 * (neut / lymph));
        }
    }
}
