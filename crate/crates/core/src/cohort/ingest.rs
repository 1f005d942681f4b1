//! CSV ingestion and export, and the case filtering pipeline.
//!
//! Format: `patient_id,case_id,label[,provenance][,sex]` followed by
//! `<parameter>__<unit>` measurement columns. Labels are `BACTERIA`, `VIRUS`
//! or `UNLABELED`; sex is `M`/`F`. Empty cells are missing values.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use super::CohortError;
use crate::domain::{
    canonicalize_partial, validate_record, Analyte, BloodPanel, CaseRecord, Dataset, Label, Provenance, RawMeasurement,
    Sex, UnitTable,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterStage {
    pub name: String,
    pub cases_in: usize,
    pub excluded: usize,
    pub reason: String,
}

/// Per-stage case counts; `cases_in - excluded` of one stage is the next stage's `cases_in`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub stages: Vec<FilterStage>,
}

impl FilterReport {
    pub fn final_count(&self) -> Option<usize> {
        self.stages.last().map(|s| s.cases_in - s.excluded)
    }

    pub fn excluded_for(&self, reason: &str) -> usize {
        self.stages.iter().filter(|s| s.reason == reason).map(|s| s.excluded).sum()
    }

    pub fn is_telescoping(&self) -> bool {
        self.stages.windows(2).all(|w| w[0].cases_in - w[0].excluded == w[1].cases_in)
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>10} {:>10}  reason", "stage", "cases in", "excluded")?;
        for s in &self.stages {
            writeln!(f, "{:<14} {:>10} {:>10}  {}", s.name, s.cases_in, s.excluded, s.reason)?;
        }
        if let Some(n) = self.final_count() {
            writeln!(f, "{:<14} {:>10}", "valid cases", n)?;
        }
        Ok(())
    }
}

pub const REASON_INCOMPLETE: &str = "No CBC or CRP";
pub const REASON_INVALID: &str = "invalid values";
pub const REASON_AMBIGUOUS: &str = "ambiguous";
pub const REASON_DUPLICATE: &str = "duplicate case_id";

/// Completeness, validity, label ambiguity, then duplicate removal.
pub fn filter_pipeline(records: Vec<CaseRecord>) -> (Dataset, FilterReport) {
    let mut report = FilterReport::default();
    let mut stage = |name: &str, reason: &str, before: usize, after: usize| {
        report.stages.push(FilterStage {
            name: name.to_string(),
            cases_in: before,
            excluded: before - after,
            reason: reason.to_string(),
        });
    };

    let n = records.len();
    let complete: Vec<CaseRecord> = records.into_iter().filter(|r| r.panel.missing_fields().is_empty()).collect();
    stage("completeness", REASON_INCOMPLETE, n, complete.len());

    let n = complete.len();
    let valid: Vec<CaseRecord> = complete.into_iter().filter(|r| validate_record(r).is_empty()).collect();
    stage("validity", REASON_INVALID, n, valid.len());

    // A case id seen with both Bacteria and Virus labels is dropped entirely.
    let n = valid.len();
    let mut seen_labels: HashMap<&str, (bool, bool)> = HashMap::new();
    for r in &valid {
        let e = seen_labels.entry(r.case_id.as_str()).or_default();
        match r.label {
            Label::Bacteria => e.0 = true,
            Label::Virus => e.1 = true,
            Label::Unlabeled => {}
        }
    }
    let ambiguous: Vec<bool> = valid
        .iter()
        .map(|r| seen_labels.get(r.case_id.as_str()).is_some_and(|&(b, v)| b && v))
        .collect();
    let unambiguous: Vec<CaseRecord> = valid
        .into_iter()
        .zip(ambiguous)
        .filter_map(|(r, amb)| (!amb).then_some(r))
        .collect();
    stage("ambiguity", REASON_AMBIGUOUS, n, unambiguous.len());

    // Keep one record per case id, preferring a labeled one.
    let n = unambiguous.len();
    let mut keep: HashMap<&str, usize> = HashMap::new();
    for (i, r) in unambiguous.iter().enumerate() {
        match keep.get(r.case_id.as_str()) {
            Some(&j) if unambiguous[j].label == Label::Unlabeled && r.label != Label::Unlabeled => {
                keep.insert(r.case_id.as_str(), i);
            }
            Some(_) => {}
            None => {
                keep.insert(r.case_id.as_str(), i);
            }
        }
    }
    let mut kept: Vec<usize> = keep.into_values().collect();
    kept.sort_unstable();
    let cases: Vec<_> = kept
        .into_iter()
        .map(|i| {
            let r = &unambiguous[i];
            crate::domain::Case {
                patient_id: r.patient_id.clone(),
                case_id: r.case_id.clone(),
                panel: BloodPanel::from_partial(&r.panel).expect("completeness and validity checked"),
                label: r.label,
                provenance: r.provenance,
            }
        })
        .collect();
    stage("duplicates", REASON_DUPLICATE, n, cases.len());

    (Dataset::new(cases), report)
}

/// Applies the pipeline to an already-complete dataset.
pub fn filter_dataset(dataset: &Dataset) -> (Dataset, FilterReport) {
    filter_pipeline(dataset.cases.iter().map(CaseRecord::from).collect())
}

enum Column {
    PatientId,
    CaseId,
    Label,
    Provenance,
    Sex,
    Measurement { name: String, unit: String },
}

fn parse_header(header: &csv::StringRecord, table: &UnitTable) -> Result<Vec<Column>, CohortError> {
    let mut cols = Vec::with_capacity(header.len());
    for (i, h) in header.iter().enumerate() {
        let h = h.trim();
        let col = match (i, h) {
            (0, "patient_id") => Column::PatientId,
            (1, "case_id") => Column::CaseId,
            (2, "label") => Column::Label,
            (0..=2, _) => {
                return Err(CohortError::MalformedHeader(
                    "header must start with patient_id,case_id,label".into(),
                ))
            }
            (_, "provenance") => Column::Provenance,
            (_, "sex") => Column::Sex,
            (_, other) => {
                let (name, unit) = other.split_once("__").ok_or_else(|| {
                    CohortError::MalformedHeader(format!("column `{other}` lacks a `__<unit>` suffix"))
                })?;
                table
                    .lookup(name, unit)
                    .map_err(|e| CohortError::MalformedHeader(format!("column `{other}`: {e}")))?;
                Column::Measurement {
                    name: name.to_string(),
                    unit: unit.to_string(),
                }
            }
        };
        cols.push(col);
    }
    if cols.len() < 3 {
        return Err(CohortError::MalformedHeader(
            "header must start with patient_id,case_id,label".into(),
        ));
    }
    Ok(cols)
}

/// Parses CSV text into raw records without filtering.
pub fn read_records<R: Read>(reader: R, table: &UnitTable) -> Result<Vec<CaseRecord>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(CohortError::MalformedHeader(e.to_string())),
    };
    if header.is_empty() {
        return Err(CohortError::MalformedHeader("empty header".into()));
    }
    let cols = parse_header(&header, table)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // Row numbers are 1-based file lines; the header is line 1.
        let line = i + 2;
        let row = row.map_err(|e| CohortError::MalformedRow {
            row: line,
            message: e.to_string(),
        })?;
        let bad = |message: String| CohortError::MalformedRow { row: line, message };
        let mut patient_id = String::new();
        let mut case_id = String::new();
        let mut label = Label::Unlabeled;
        let mut provenance = Provenance::Clinical;
        let mut sex: Option<Sex> = None;
        let mut raw = Vec::new();
        for (col, cell) in cols.iter().zip(row.iter()) {
            let cell = cell.trim();
            match col {
                Column::PatientId => patient_id = cell.to_string(),
                Column::CaseId => case_id = cell.to_string(),
                Column::Label => label = Label::parse(cell).ok_or_else(|| bad(format!("bad label `{cell}`")))?,
                Column::Provenance => {
                    provenance = Provenance::parse(cell).ok_or_else(|| bad(format!("bad provenance `{cell}`")))?
                }
                Column::Sex => {
                    if !cell.is_empty() {
                        sex = Some(Sex::parse(cell).ok_or_else(|| bad(format!("bad sex `{cell}`")))?);
                    }
                }
                Column::Measurement { name, unit } => {
                    if cell.is_empty() {
                        continue;
                    }
                    let value: f64 = cell
                        .parse()
                        .map_err(|_| bad(format!("`{cell}` is not a number in column {name}__{unit}")))?;
                    raw.push(RawMeasurement::new(name.clone(), value, unit.clone()));
                }
            }
        }
        if patient_id.is_empty() || case_id.is_empty() {
            return Err(bad("patient_id and case_id are required".into()));
        }
        let mut panel = canonicalize_partial(&raw, table).map_err(|e| bad(e.to_string()))?;
        if sex.is_some() {
            panel.sex = sex;
        }
        records.push(CaseRecord {
            patient_id,
            case_id,
            panel,
            label,
            provenance,
        });
    }
    Ok(records)
}

pub fn ingest_reader<R: Read>(reader: R, table: &UnitTable) -> Result<(Dataset, FilterReport), CohortError> {
    Ok(filter_pipeline(read_records(reader, table)?))
}

/// Reads, canonicalizes, validates and filters a CSV file.
pub fn ingest_csv(path: &Path, table: &UnitTable) -> Result<(Dataset, FilterReport), CohortError> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CohortError::FileNotFound(path.display().to_string()),
        _ => CohortError::Io(e),
    })?;
    ingest_reader(std::io::BufReader::new(file), table)
}

/// Canonical-unit export. Output is a pure function of the dataset.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "patient_id".to_string(),
        "case_id".to_string(),
        "label".to_string(),
        "provenance".to_string(),
        "sex".to_string(),
    ];
    header.extend(Analyte::ALL.iter().map(|a| format!("{}__{}", a.name(), a.canonical_unit())));
    w.write_record(&header)?;
    for c in &dataset.cases {
        let mut row = vec![
            c.patient_id.clone(),
            c.case_id.clone(),
            c.label.as_str().to_string(),
            c.provenance.as_str().to_string(),
            c.panel.sex.as_str().to_string(),
        ];
        row.extend(Analyte::ALL.iter().map(|a| format!("{}", c.panel.get(*a))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), CohortError> {
    let file = std::fs::File::create(path)?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

/// Loads a canonical CSV previously written by [`save_csv`]; filtering is
/// applied but is expected to be a no-op.
pub fn load_csv(path: &Path) -> Result<Dataset, CohortError> {
    Ok(ingest_csv(path, &UnitTable::builtin())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{case, dataset_from};

    const HEADER: &str = "patient_id,case_id,label,sex,wbc__1E9/L,neutrophils_count__1E9/L,lymphocyte_count__1E9/L,monocyte_count__1E9/L,neutrophils_pct__%,lymphocyte_pct__%,monocyte_pct__%,rbc__1E12/L,hb__g/dL,hct__1,mcv__fL,mch__pg,mchc__g/L,rdw__%,platelet_count__1E9/L,mpv__fL,crp__mg/dL,age__years";

    fn row(pid: &str, cid: &str, label: &str, crp: &str) -> String {
        format!("{pid},{cid},{label},M,8.1,5.33,1.38,0.56,69.3,18.2,7.6,4.37,13.2,0.393,90.2,30.2,333,13.8,210,8.5,{crp},62")
    }

    fn ingest(text: &str) -> Result<(Dataset, FilterReport), CohortError> {
        ingest_reader(text.as_bytes(), &UnitTable::builtin())
    }

    #[test]
    fn three_good_rows() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row("p1", "c1", "BACTERIA", "9.0"),
            row("p2", "c2", "VIRUS", "0.3"),
            row("p2", "c3", "UNLABELED", "2.3")
        );
        let (ds, report) = ingest(&text).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(report.stages.iter().all(|s| s.excluded == 0));
        assert!((ds.cases[2].panel.get(Analyte::Crp) - 23.0).abs() < 1e-12);
        assert!((ds.cases[0].panel.get(Analyte::Hb) - 132.0).abs() < 1e-12);
    }

    #[test]
    fn missing_crp_excluded() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row("p1", "c1", "BACTERIA", "9.0"),
            row("p2", "c2", "VIRUS", ""),
            row("p3", "c3", "VIRUS", "0.3")
        );
        let (ds, report) = ingest(&text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(report.excluded_for(REASON_INCOMPLETE), 1);
        assert!(report.is_telescoping());
    }

    #[test]
    fn empty_file_with_header() {
        let (ds, report) = ingest(&format!("{HEADER}\n")).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.final_count(), Some(0));
    }

    #[test]
    fn header_and_row_errors() {
        assert!(matches!(ingest("case_id,patient_id,label\n"), Err(CohortError::MalformedHeader(_))));
        assert!(matches!(
            ingest("patient_id,case_id,label,crp\n"),
            Err(CohortError::MalformedHeader(_))
        ));
        assert!(matches!(
            ingest("patient_id,case_id,label,ferritin__ug/L\n"),
            Err(CohortError::MalformedHeader(_))
        ));
        let text = format!("{HEADER}\n{}\n{}\n", row("p1", "c1", "BACTERIA", "9"), row("p2", "c2", "VIRUS", "abc"));
        match ingest(&text) {
            Err(CohortError::MalformedRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{HEADER}\n{}\n", row("p1", "c1", "FUNGUS", "9"));
        assert!(matches!(ingest(&text), Err(CohortError::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn missing_file() {
        let err = ingest_csv(Path::new("/nonexistent/x.csv"), &UnitTable::builtin()).unwrap_err();
        assert!(matches!(err, CohortError::FileNotFound(_)));
    }

    #[test]
    fn ambiguous_case_dropped() {
        let ds = dataset_from(vec![
            case("p1", "c1", Label::Bacteria),
            case("p1", "c1", Label::Virus),
            case("p2", "c2", Label::Virus),
        ]);
        let (out, report) = filter_dataset(&ds);
        assert_eq!(out.len(), 1);
        assert_eq!(out.cases[0].case_id, "c2");
        assert_eq!(report.excluded_for(REASON_AMBIGUOUS), 2);
    }

    #[test]
    fn valid_dataset_is_identity() {
        let ds = dataset_from(vec![case("p1", "c1", Label::Bacteria), case("p2", "c2", Label::Virus)]);
        let (out, report) = filter_dataset(&ds);
        assert_eq!(out, ds);
        assert!(report.stages.iter().all(|s| s.excluded == 0));
        assert_eq!(report.stages.len(), 4);
    }

    #[test]
    fn duplicates_prefer_labeled() {
        let ds = dataset_from(vec![
            case("p1", "c1", Label::Unlabeled),
            case("p1", "c1", Label::Bacteria),
            case("p1", "c1", Label::Bacteria),
        ]);
        let (out, report) = filter_dataset(&ds);
        assert_eq!(out.len(), 1);
        assert_eq!(out.cases[0].label, Label::Bacteria);
        assert_eq!(report.excluded_for(REASON_DUPLICATE), 2);
    }

    #[test]
    fn report_renders_flow() {
        // Stage counts of the published cohort flow, as a rendering example.
        let report = FilterReport {
            stages: vec![
                FilterStage {
                    name: "completeness".into(),
                    cases_in: 69_394,
                    excluded: 20_394,
                    reason: REASON_INCOMPLETE.into(),
                },
                FilterStage {
                    name: "ambiguity".into(),
                    cases_in: 49_000,
                    excluded: 4_880,
                    reason: REASON_AMBIGUOUS.into(),
                },
            ],
        };
        assert!(report.is_telescoping());
        assert_eq!(report.final_count(), Some(44_120));
        let text = report.to_string();
        assert!(text.contains("69394") && text.contains("No CBC or CRP") && text.contains("44120"));
    }

    #[test]
    fn export_then_ingest_roundtrip() {
        let ds = dataset_from(vec![case("p1", "c1", Label::Bacteria), case("p2", "c2", Label::Unlabeled)]);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let (back, _) = ingest(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, ds);
    }
}
