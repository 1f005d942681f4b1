//! Synthetic cohort generator calibrated to class-conditional medians and IQRs.
//!
//! Eleven primary parameters are sampled independently per class; the rest of
//! the panel follows from the hematology identities (WBC from the three counts
//! and a residual "other cells" fraction, percentages, Hct, Hb, MCH, NLR).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CohortError;
use crate::domain::{Analyte, BloodPanel, Case, Dataset, Label, Provenance, Sex};

/// Upper-quartile z of the standard normal.
pub const Z_Q3: f64 = 0.674_489_750_196_081_7;
const MAX_ATTEMPTS: usize = 100;
const DEFAULT_CONFIG: &str = include_str!("../../data/generator_default.txt");

/// Parameters drawn from marginals; everything else is derived.
pub const PRIMARY: [Analyte; 11] = [
    Analyte::Age,
    Analyte::NeutrophilsCount,
    Analyte::LymphocyteCount,
    Analyte::MonocyteCount,
    Analyte::Rbc,
    Analyte::Mcv,
    Analyte::Mchc,
    Analyte::Rdw,
    Analyte::PlateletCount,
    Analyte::Mpv,
    Analyte::Crp,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    LogNormal,
    Normal,
    TruncatedNormal,
}

impl Family {
    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "LogNormal" => Some(Family::LogNormal),
            "Normal" => Some(Family::Normal),
            "TruncatedNormal" => Some(Family::TruncatedNormal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::LogNormal => "LogNormal",
            Family::Normal => "Normal",
            Family::TruncatedNormal => "TruncatedNormal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub parameter: Analyte,
    pub family: Family,
    pub median: f64,
    pub iqr: f64,
    pub bounds: Option<(f64, f64)>,
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<(), CohortError> {
        if !(self.iqr > 0.0) {
            return Err(CohortError::InvalidConfig(format!("{}: iqr must be > 0", self.parameter)));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo < hi) || self.median < lo || self.median > hi {
                return Err(CohortError::InvalidConfig(format!(
                    "{}: median {} outside bounds ({lo}, {hi})",
                    self.parameter, self.median
                )));
            }
        } else if self.family == Family::TruncatedNormal {
            return Err(CohortError::InvalidConfig(format!(
                "{}: TruncatedNormal requires bounds",
                self.parameter
            )));
        }
        Ok(())
    }

    pub fn fit(&self) -> Result<Marginal, CohortError> {
        fit_marginal(self.median, self.iqr, self.family, self.bounds)
    }
}

/// Fitted distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl Marginal {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match *self {
            Marginal::Normal { mean, sd } | Marginal::TruncatedNormal { mean, sd, .. } => mean + sd * z,
            Marginal::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
        }
    }
}

/// Solves the distribution parameters from a median and interquartile range.
///
/// LogNormal quartiles are `median·exp(±z·σ)`, so `iqr = 2·median·sinh(z·σ)`;
/// σ is found by bisection to 1e-10.
pub fn fit_marginal(median: f64, iqr: f64, family: Family, bounds: Option<(f64, f64)>) -> Result<Marginal, CohortError> {
    if !(iqr > 0.0) {
        return Err(CohortError::InvalidConfig(format!("iqr must be > 0, got {iqr}")));
    }
    match family {
        Family::Normal => Ok(Marginal::Normal {
            mean: median,
            sd: iqr / (2.0 * Z_Q3),
        }),
        Family::TruncatedNormal => {
            let (lo, hi) = bounds.ok_or_else(|| CohortError::InvalidConfig("TruncatedNormal requires bounds".into()))?;
            Ok(Marginal::TruncatedNormal {
                mean: median,
                sd: iqr / (2.0 * Z_Q3),
                lo,
                hi,
            })
        }
        Family::LogNormal => {
            if !(median > 0.0) {
                return Err(CohortError::NonPositiveMedian(median));
            }
            let target = |s: f64| 2.0 * median * (Z_Q3 * s).sinh() - iqr;
            let mut lo = 0.0;
            let mut hi = 1.0;
            while target(hi) < 0.0 {
                hi *= 2.0;
            }
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if target(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(Marginal::LogNormal {
                mu: median.ln(),
                sigma: 0.5 * (lo + hi),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    pub marginals: Vec<MarginalSpec>,
    pub male_fraction: f64,
}

impl ClassConfig {
    fn spec(&self, a: Analyte) -> Option<&MarginalSpec> {
        self.marginals.iter().find(|m| m.parameter == a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub bacteria: ClassConfig,
    pub virus: ClassConfig,
    pub other_wbc_fraction_range: (f64, f64),
    /// Fraction of Bacteria cases.
    pub class_prevalence: f64,
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        let (lo, hi) = self.other_wbc_fraction_range;
        if !(in_open_unit(lo) && in_open_unit(hi) && lo < hi) {
            return Err(CohortError::InvalidConfig(format!(
                "other_wbc_fraction_range must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
            )));
        }
        if !in_open_unit(self.class_prevalence) {
            return Err(CohortError::InvalidConfig("class_prevalence must be in (0,1)".into()));
        }
        for (name, class) in [("BACTERIA", &self.bacteria), ("VIRUS", &self.virus)] {
            if !in_open_unit(class.male_fraction) {
                return Err(CohortError::InvalidConfig(format!("{name}: male_fraction must be in (0,1)")));
            }
            for a in PRIMARY {
                let spec = class
                    .spec(a)
                    .ok_or_else(|| CohortError::InvalidConfig(format!("{name}: no marginal for {a}")))?;
                spec.validate()?;
            }
            if let Some(extra) = class.marginals.iter().find(|m| !PRIMARY.contains(&m.parameter)) {
                return Err(CohortError::InvalidConfig(format!(
                    "{name}: {} is derived, not sampled",
                    extra.parameter
                )));
            }
        }
        Ok(())
    }

    /// Line format:
    /// `version 1`, `class_prevalence p`, `other_wbc_fraction_range lo hi`,
    /// `male_fraction CLASS f`, `marginal CLASS parameter Family median iqr [lo hi]`.
    pub fn parse(text: &str) -> Result<Self, CohortError> {
        let mut version = false;
        let mut prevalence = None;
        let mut other = None;
        let mut male = [None, None];
        let mut marginals: [Vec<MarginalSpec>; 2] = [Vec::new(), Vec::new()];
        let err = |line: usize, msg: &str| CohortError::InvalidConfig(format!("line {line}: {msg}"));
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tok: Vec<&str> = content.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(line, &format!("bad number `{s}`")));
            let class = |s: &str| match s {
                "BACTERIA" => Ok(0usize),
                "VIRUS" => Ok(1usize),
                _ => Err(err(line, &format!("bad class `{s}`"))),
            };
            match tok[0] {
                "version" if tok.len() == 2 => {
                    if tok[1] != "1" {
                        return Err(err(line, "unsupported version"));
                    }
                    version = true;
                }
                "class_prevalence" if tok.len() == 2 => prevalence = Some(num(tok[1])?),
                "other_wbc_fraction_range" if tok.len() == 3 => other = Some((num(tok[1])?, num(tok[2])?)),
                "male_fraction" if tok.len() == 3 => male[class(tok[1])?] = Some(num(tok[2])?),
                "marginal" if tok.len() == 6 || tok.len() == 8 => {
                    let c = class(tok[1])?;
                    let parameter =
                        Analyte::from_name(tok[2]).ok_or_else(|| err(line, &format!("unknown parameter `{}`", tok[2])))?;
                    let family = Family::parse(tok[3]).ok_or_else(|| err(line, &format!("unknown family `{}`", tok[3])))?;
                    let bounds = if tok.len() == 8 {
                        Some((num(tok[6])?, num(tok[7])?))
                    } else {
                        None
                    };
                    marginals[c].push(MarginalSpec {
                        parameter,
                        family,
                        median: num(tok[4])?,
                        iqr: num(tok[5])?,
                        bounds,
                    });
                }
                _ => return Err(err(line, &format!("unrecognized line `{content}`"))),
            }
        }
        if !version {
            return Err(CohortError::InvalidConfig("missing `version 1` line".into()));
        }
        let [mb, mv] = marginals;
        let cfg = GeneratorConfig {
            bacteria: ClassConfig {
                marginals: mb,
                male_fraction: male[0].ok_or_else(|| CohortError::InvalidConfig("missing BACTERIA male_fraction".into()))?,
            },
            virus: ClassConfig {
                marginals: mv,
                male_fraction: male[1].ok_or_else(|| CohortError::InvalidConfig("missing VIRUS male_fraction".into()))?,
            },
            other_wbc_fraction_range: other
                .ok_or_else(|| CohortError::InvalidConfig("missing other_wbc_fraction_range".into()))?,
            class_prevalence: prevalence.ok_or_else(|| CohortError::InvalidConfig("missing class_prevalence".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("version 1\n");
        let _ = writeln!(s, "class_prevalence {}", self.class_prevalence);
        let _ = writeln!(
            s,
            "other_wbc_fraction_range {} {}",
            self.other_wbc_fraction_range.0, self.other_wbc_fraction_range.1
        );
        for (name, class) in [("BACTERIA", &self.bacteria), ("VIRUS", &self.virus)] {
            let _ = writeln!(s, "male_fraction {name} {}", class.male_fraction);
            for m in &class.marginals {
                let _ = write!(s, "marginal {name} {} {} {} {}", m.parameter, m.family.as_str(), m.median, m.iqr);
                if let Some((lo, hi)) = m.bounds {
                    let _ = write!(s, " {lo} {hi}");
                }
                s.push('\n');
            }
        }
        s
    }

    /// The shipped configuration (Table-1 class medians and IQRs).
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("shipped generator config is valid")
    }

    pub fn class(&self, label: Label) -> &ClassConfig {
        match label {
            Label::Bacteria => &self.bacteria,
            _ => &self.virus,
        }
    }
}

struct FittedClass {
    marginals: Vec<(Analyte, Marginal, Option<(f64, f64)>)>,
    male_fraction: f64,
}

fn fit_class(class: &ClassConfig) -> Result<FittedClass, CohortError> {
    let mut marginals = Vec::with_capacity(PRIMARY.len());
    for a in PRIMARY {
        let spec = class.spec(a).expect("validated");
        let bounds = match spec.family {
            Family::TruncatedNormal => spec.bounds,
            _ => spec.bounds,
        };
        marginals.push((a, spec.fit()?, bounds));
    }
    Ok(FittedClass {
        marginals,
        male_fraction: class.male_fraction,
    })
}

fn draw_bounded<R: Rng>(
    rng: &mut R,
    parameter: Analyte,
    marginal: &Marginal,
    bounds: Option<(f64, f64)>,
) -> Result<f64, CohortError> {
    for _ in 0..MAX_ATTEMPTS {
        let x = marginal.draw(rng);
        match bounds {
            Some((lo, hi)) if x < lo || x > hi => continue,
            _ => return Ok(x),
        }
    }
    Err(CohortError::ResampleExhausted(parameter.name().to_string()))
}

/// Completes a panel from the primary draws and the other-cells fraction `o`.
pub fn derive_panel(primary: &[(Analyte, f64)], other_fraction: f64, sex: Sex) -> BloodPanel {
    let mut p = BloodPanel::from_values([0.0; 19], sex);
    for &(a, v) in primary {
        p.set(a, v);
    }
    let neut = p.get(Analyte::NeutrophilsCount);
    let lymph = p.get(Analyte::LymphocyteCount);
    let mono = p.get(Analyte::MonocyteCount);
    let wbc = (neut + lymph + mono) / (1.0 - other_fraction);
    p.set(Analyte::Wbc, wbc);
    p.set(Analyte::NeutrophilsPct, neut / wbc);
    p.set(Analyte::LymphocytePct, lymph / wbc);
    p.set(Analyte::MonocytePct, mono / wbc);
    let mcv = p.get(Analyte::Mcv);
    let mchc = p.get(Analyte::Mchc);
    let hct = mcv * p.get(Analyte::Rbc) / 1000.0;
    p.set(Analyte::Hct, hct);
    p.set(Analyte::Hb, mchc * hct);
    p.set(Analyte::Mch, mchc * mcv / 1000.0);
    p.set(Analyte::Nlr, neut / lymph);
    p
}

fn generate_one(
    seed: u64,
    index: usize,
    config: &GeneratorConfig,
    fitted: &[FittedClass; 2],
) -> Result<Case, CohortError> {
    // One counter-addressed stream per case: any partition of indices yields the same cohort.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let label = if rng.random::<f64>() < config.class_prevalence {
        Label::Bacteria
    } else {
        Label::Virus
    };
    let class = &fitted[if label == Label::Bacteria { 0 } else { 1 }];
    let mut primary = Vec::with_capacity(PRIMARY.len());
    for (a, marginal, bounds) in &class.marginals {
        primary.push((*a, draw_bounded(&mut rng, *a, marginal, *bounds)?));
    }
    let (lo, hi) = config.other_wbc_fraction_range;
    let other = rng.random_range(lo..hi);
    let sex = if rng.random::<f64>() < class.male_fraction {
        Sex::Male
    } else {
        Sex::Female
    };
    Ok(Case {
        patient_id: format!("SP{index:07}"),
        case_id: format!("SC{index:07}"),
        panel: derive_panel(&primary, other, sex),
        label,
        provenance: Provenance::Synthetic,
    })
}

/// Generates `n` synthetic cases, one per synthetic patient. Deterministic in `seed`.
pub fn generate_cohort(config: &GeneratorConfig, n: usize, seed: u64) -> Result<Dataset, CohortError> {
    config.validate()?;
    let fitted = [fit_class(&config.bacteria)?, fit_class(&config.virus)?];
    let cases = (0..n)
        .into_par_iter()
        .map(|i| generate_one(seed, i, config, &fitted))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(cases))
}

/// Generates only the cases with indices in `range`; concatenating ranges
/// reproduces [`generate_cohort`].
pub fn generate_range(
    config: &GeneratorConfig,
    range: std::ops::Range<usize>,
    seed: u64,
) -> Result<Vec<Case>, CohortError> {
    config.validate()?;
    let fitted = [fit_class(&config.bacteria)?, fit_class(&config.virus)?];
    range.map(|i| generate_one(seed, i, config, &fitted)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_fit_quartile_identity() {
        match fit_marginal(0.0, 1.34898, Family::Normal, None).unwrap() {
            Marginal::Normal { mean, sd } => {
                assert_eq!(mean, 0.0);
                assert!((sd - 1.0).abs() < 1e-5);
            }
            m => panic!("{m:?}"),
        }
    }

    fn lognormal_sigma(median: f64, iqr: f64) -> f64 {
        match fit_marginal(median, iqr, Family::LogNormal, None).unwrap() {
            Marginal::LogNormal { mu, sigma } => {
                assert!((mu - median.ln()).abs() < 1e-15);
                sigma
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn lognormal_fit_against_closed_form() {
        // sinh(z·σ) = iqr / (2·median) has the closed-form solution asinh(·)/z.
        for (m, iqr, approx) in [(3.0, 6.0, 1.3067), (90.0, 147.0, 1.1055)] {
            let oracle = (iqr / (2.0 * m) as f64).asinh() / Z_Q3;
            let s = lognormal_sigma(m, iqr);
            assert!((s - oracle).abs() < 1e-9, "{s} vs {oracle}");
            assert!((s - approx).abs() < 1e-4, "{s} vs {approx}");
        }
    }

    #[test]
    fn lognormal_needs_positive_median() {
        assert!(matches!(
            fit_marginal(0.0, 1.0, Family::LogNormal, None),
            Err(CohortError::NonPositiveMedian(_))
        ));
        assert!(fit_marginal(1.0, 0.0, Family::Normal, None).is_err());
    }

    #[test]
    fn identities_at_bacteria_medians() {
        let p = derive_panel(
            &[
                (Analyte::Mcv, 89.6),
                (Analyte::Rbc, 4.16),
                (Analyte::Mchc, 333.0),
                (Analyte::NeutrophilsCount, 7.48),
                (Analyte::LymphocyteCount, 1.13),
                (Analyte::MonocyteCount, 0.60),
            ],
            0.08,
            Sex::Male,
        );
        assert!((p.get(Analyte::Hct) - 0.3727).abs() < 1e-4);
        assert!((p.get(Analyte::Hb) - 124.1).abs() < 0.05);
        assert!((p.get(Analyte::Mch) - 29.8368).abs() < 1e-9);
    }

    #[test]
    fn empty_cohort() {
        assert!(generate_cohort(&GeneratorConfig::builtin(), 0, 1).unwrap().is_empty());
    }

    #[test]
    fn partitioned_generation_matches() {
        let cfg = GeneratorConfig::builtin();
        let whole = generate_cohort(&cfg, 300, 7).unwrap();
        let mut parts = generate_range(&cfg, 0..120, 7).unwrap();
        parts.extend(generate_range(&cfg, 120..300, 7).unwrap());
        assert_eq!(whole.cases, parts);
        assert_ne!(generate_cohort(&cfg, 300, 8).unwrap(), whole);
    }

    #[test]
    fn resample_exhaustion() {
        let mut cfg = GeneratorConfig::builtin();
        let crp = cfg.bacteria.marginals.iter_mut().find(|m| m.parameter == Analyte::Crp).unwrap();
        // Median inside bounds, but the bounds hold a vanishing share of the mass.
        crp.median = 1000.0;
        crp.iqr = 1.0;
        crp.bounds = Some((1e6 - 1e-9, 1e6));
        crp.median = 1e6 - 5e-10;
        crp.iqr = 1e6;
        cfg.class_prevalence = 0.99;
        assert!(matches!(
            generate_cohort(&cfg, 50, 3),
            Err(CohortError::ResampleExhausted(p)) if p == "crp"
        ));
    }

    #[test]
    fn config_text_roundtrip_and_errors() {
        let cfg = GeneratorConfig::builtin();
        assert_eq!(GeneratorConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(GeneratorConfig::parse("class_prevalence 0.5\n").is_err());
        let bad = cfg.to_text().replace("other_wbc_fraction_range 0.02 0.08", "other_wbc_fraction_range 0.2 0.1");
        assert!(GeneratorConfig::parse(&bad).is_err());
        let derived = format!("{}marginal VIRUS wbc Normal 6 2\n", cfg.to_text());
        assert!(GeneratorConfig::parse(&derived).is_err());
    }
}
