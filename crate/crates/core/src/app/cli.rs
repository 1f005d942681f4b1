//! Command-line pipeline. Every randomized step takes an explicit seed, and
//! report files contain no timestamps, so reruns are byte-identical.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use super::{load_model, save_model, ModelBundle, ServiceState};
use crate::cohort::{generate_cohort, grouped_stratified_split, ingest_csv, load_csv, save_csv, GeneratorConfig, SplitSpec};
use crate::domain::{feature_names, Analyte, Dataset, UnitTable};
use crate::eval::{
    band_analysis, band_text, cross_validate, cross_validate_with, cv_csv, cv_table, fit_crp_rule, fit_crp_rule_values,
    grouped_stratified_kfold, metrics_table, CrpRule, CrpRuleLearner, CvReport, FoldLearner,
};
use crate::explain::{
    band_importance_csv, beeswarm_csv, explain_rows, sample_background, tables_by_crp_band, ImportanceTable, ShapleyMode,
};
use crate::learners::{ClassifierSpec, Family, Hyperparams};
use crate::semisup::{assemble_training, bootstrap_label, detect_noise};
use crate::stats::compare::{compare_reports, population_csv, population_table};
use crate::stats::Alternative;
use crate::tune::{random_search, trial_log_csv, SearchSpace};

pub type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "virobac", version, about = "Bacterial vs viral infection classification from blood panels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// GBT, RF, DT, KNN or LR.
    #[arg(long, default_value = "GBT")]
    pub family: String,
    /// Hyperparameter overrides, `key=value,key=value`.
    #[arg(long, default_value = "")]
    pub params: String,
    /// Standardize features for tree models too.
    #[arg(long)]
    pub scale: bool,
}

impl ModelArgs {
    pub fn spec(&self) -> CliResult<ClassifierSpec> {
        let family = Family::parse(&self.family)?;
        let params = Hyperparams::default_for(family).with_override_str(&self.params)?;
        Ok(ClassifierSpec::new(params).with_scaling(self.scale))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Canonicalize and filter a raw CSV export.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        units: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Patient-grouped stratified train/test split.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Noise detection and pseudo-labeling of unlabeled cases.
    Semisup {
        #[arg(long)]
        labeled: PathBuf,
        /// Defaults to the unlabeled rows of `--labeled`.
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long, default_value_t = 0.70)]
        threshold: f64,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Training set: labeled cases plus pseudo-labeled additions.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_out: PathBuf,
        #[arg(long)]
        audit_out: Option<PathBuf>,
    },
    /// Fit one model on a training set and save the bundle.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Grouped stratified k-fold cross-validation of one learner.
    Cv {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate several learners and the CRP rule on shared folds, with pairwise tests.
    Compare {
        #[arg(long, value_delimiter = ',', default_value = "GBT,RF,KNN,DT,LR")]
        families: Vec<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Model vs CRP rule inside a CRP band.
    Band {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate on this set after fitting on `--data`; otherwise use out-of-fold predictions.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        lo: f64,
        #[arg(long, default_value_t = 40.0)]
        hi: f64,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random-search hyperparameter tuning.
    Tune {
        #[arg(long, default_value = "GBT")]
        family: String,
        #[arg(long, default_value_t = crate::tune::DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shapley explanations: beeswarm and CRP-band importance CSVs.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Background cases; defaults to the background stored in the model.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n_background: usize,
        #[arg(long, default_value_t = 1000)]
        permutations: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,20,40,80,160,1000")]
        edges: Vec<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the CRP threshold rule or apply a given threshold.
    CrpRule {
        #[arg(long, conflicts_with = "apply")]
        fit: Option<PathBuf>,
        #[arg(long, requires = "threshold")]
        apply: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-feature Bacteria vs Virus medians, IQRs, tests and effect sizes.
    Describe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 999)]
        permutations: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one or more model bundles over HTTP.
    Serve {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Noise case ids from a `case_id,probability,decision` CSV (rows marked `noise`).
pub fn read_noise(path: Option<&Path>) -> CliResult<BTreeSet<String>> {
    let Some(path) = path else {
        return Ok(BTreeSet::new());
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let mut ids = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.get(2) == Some("noise") {
            ids.insert(rec.get(0).unwrap_or_default().to_string());
        }
    }
    Ok(ids)
}

fn created_at() -> chrono::DateTime<chrono::Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|t| chrono::DateTime::from_timestamp(t, 0))
        .unwrap_or_else(chrono::Utc::now)
}

/// Out-of-fold model probabilities plus the rule fitted on all labeled cases, scored on the band.
pub fn band_from_cv(
    spec: &ClassifierSpec,
    data: &Dataset,
    k: usize,
    seed: u64,
    noise: &BTreeSet<String>,
    lo: f64,
    hi: f64,
) -> CliResult<(crate::eval::BandReport, CrpRule)> {
    let out = cross_validate(spec, data, k, seed, noise)?;
    let rows: Vec<usize> = out.scored().map(|(i, _)| i).collect();
    let probas: Vec<f64> = out.scored().map(|(_, p)| p).collect();
    let scored = data.subset(&rows);
    let rule = fit_crp_rule(data)?;
    let report = band_analysis(&scored.column(Analyte::Crp), &scored.targets(), &probas, &rule, lo, hi)?;
    Ok((report, rule))
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth { config, n, seed, out } => {
            let cfg = match config {
                Some(p) => GeneratorConfig::parse(&fs::read_to_string(p)?)?,
                None => GeneratorConfig::builtin(),
            };
            let ds = generate_cohort(&cfg, n, seed)?;
            save_csv(&ds, &out)?;
            let c = ds.class_counts();
            println!("wrote {} cases ({} bacteria, {} virus) to {}", ds.len(), c.bacteria, c.virus, out.display());
        }
        Command::Ingest { input, units, out } => {
            let table = match units {
                Some(p) => UnitTable::parse(&fs::read_to_string(p)?)?,
                None => UnitTable::builtin(),
            };
            let (ds, report) = ingest_csv(&input, &table)?;
            save_csv(&ds, &out)?;
            print!("{report}");
        }
        Command::Split {
            data,
            test_fraction,
            seed,
            train_out,
            test_out,
        } => {
            let ds = load_csv(&data)?;
            let (train, test) = grouped_stratified_split(&ds, &SplitSpec::new(test_fraction, seed)?)?;
            save_csv(&train, &train_out)?;
            save_csv(&test, &test_out)?;
            println!("train {} cases, test {} cases", train.len(), test.len());
        }
        Command::Semisup {
            labeled,
            unlabeled,
            threshold,
            model,
            k,
            seed,
            out,
            noise_out,
            audit_out,
        } => {
            let spec = model.spec()?;
            let all = load_csv(&labeled)?;
            let pool = match unlabeled {
                Some(p) => load_csv(&p)?.unlabeled(),
                None => all.unlabeled(),
            };
            let lab = all.labeled();
            let noise = detect_noise(&lab, &spec, k, seed)?;
            let outcome = bootstrap_label(&lab, &pool, &spec, threshold, seed)?;
            let (train, _) = assemble_training(&lab, &noise, &outcome)?;
            save_csv(&train, &out)?;
            fs::write(&noise_out, noise.to_csv())?;
            if let Some(p) = audit_out {
                fs::write(p, outcome.to_csv())?;
            }
            let c = lab.class_counts();
            println!(
                "{} virus + {} bacteria labeled, {} pseudo-labeled ({} discarded), {} noise",
                c.virus,
                c.bacteria,
                outcome.labeled_additions.len(),
                outcome.discarded.len(),
                noise.len()
            );
        }
        Command::Train {
            model,
            train,
            noise,
            seed,
            out_model,
        } => {
            let spec = model.spec()?;
            let ds = load_csv(&train)?;
            let noise = read_noise(noise.as_deref())?;
            let bundle = ModelBundle::train(&spec, &ds, &noise, seed, created_at())?;
            save_model(&bundle, &out_model)?;
            println!("saved {} ({}) to {}", bundle.model_id, bundle.family, out_model.display());
        }
        Command::Cv {
            model,
            data,
            k,
            seed,
            noise,
            out,
        } => {
            let spec = model.spec()?;
            let ds = load_csv(&data)?;
            let noise = read_noise(noise.as_deref())?;
            let r = cross_validate(&spec, &ds, k, seed, &noise)?;
            emit(&format!("{}\n{}", cv_table(std::slice::from_ref(&r.report)), cv_csv(&[r.report])), out.as_deref())?;
        }
        Command::Compare {
            families,
            data,
            k,
            seed,
            noise,
            out_dir,
        } => {
            let ds = load_csv(&data)?;
            let noise = read_noise(noise.as_deref())?;
            let folds = grouped_stratified_kfold(&ds, k, seed)?;
            let mut learners: Vec<Box<dyn FoldLearner>> = Vec::new();
            for f in &families {
                learners.push(Box::new(ClassifierSpec::default_for(Family::parse(f)?)));
            }
            learners.push(Box::new(CrpRuleLearner));
            let reports: Vec<CvReport> = learners
                .iter()
                .map(|l| cross_validate_with(l.as_ref(), &ds, &folds, &noise).map(|o| o.report))
                .collect::<Result<_, _>>()?;
            let table = compare_reports(&reports, Alternative::TwoSided)?;
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("cv.csv"), cv_csv(&reports))?;
            fs::write(out_dir.join("pairwise.csv"), table.to_csv())?;
            let text = format!("{}\n{}", cv_table(&reports), table.to_text());
            fs::write(out_dir.join("report.txt"), &text)?;
            print!("{text}");
        }
        Command::Band {
            model,
            data,
            test,
            lo,
            hi,
            k,
            seed,
            noise,
            out,
        } => {
            let spec = model.spec()?;
            let ds = load_csv(&data)?;
            let noise = read_noise(noise.as_deref())?;
            let (report, rule) = match test {
                None => band_from_cv(&spec, &ds, k, seed, &noise, lo, hi)?,
                Some(t) => {
                    let test = load_csv(&t)?.labeled();
                    let train = ds.labeled().filter(|c| !noise.contains(&c.case_id));
                    let m = spec.fit(&train.feature_matrix(), &train.targets(), seed)?;
                    let rule = fit_crp_rule(&train)?;
                    let probas = m.predict_matrix(&test.feature_matrix())?;
                    let crp = test.column(Analyte::Crp);
                    let y = test.targets();
                    let whole = [
                        (spec.family().as_str(), crate::eval::evaluate(&probas, &y, 0.5)?),
                        ("CRP", rule.evaluate(&crp, &y)?),
                    ];
                    let rows: Vec<(&str, &crate::eval::MetricsReport)> = whole.iter().map(|(n, m)| (*n, m)).collect();
                    print!("{}", metrics_table(&rows));
                    (band_analysis(&crp, &y, &probas, &rule, lo, hi)?, rule)
                }
            };
            emit(&format!("CRP_opt = {} mg/L\n{}", rule.threshold, band_text(&report)), out.as_deref())?;
        }
        Command::Tune {
            family,
            budget,
            data,
            space,
            k,
            seed,
            noise,
            out,
        } => {
            let space = match space {
                Some(p) => SearchSpace::parse(&fs::read_to_string(p)?)?,
                None => SearchSpace::default_for(Family::parse(&family)?),
            };
            let ds = load_csv(&data)?;
            let noise = read_noise(noise.as_deref())?;
            let trials = random_search(&space, &ds, budget, k, seed, &noise)?;
            fs::write(&out, trial_log_csv(&trials))?;
            if let Some(best) = trials.first() {
                println!(
                    "best trial {} mean accuracy {:.4}: {}",
                    best.trial,
                    best.mean_accuracy.unwrap_or(f64::NAN),
                    serde_json::to_string(&best.config)?
                );
            }
        }
        Command::Explain {
            model,
            data,
            background,
            n_background,
            permutations,
            edges,
            seed,
            out_dir,
        } => {
            let bundle = load_model(&model)?;
            let ds = load_csv(&data)?;
            let x = ds.feature_matrix();
            let bg = match background {
                Some(p) => sample_background(&load_csv(&p)?.feature_matrix(), n_background, seed),
                None => bundle.explain.background_matrix(),
            };
            let mode = ShapleyMode::Sampled {
                n_permutations: permutations,
                seed,
            };
            let names = feature_names();
            let results = explain_rows(&bundle.model, &x, &bg, mode)?;
            let ids: Vec<String> = ds.cases.iter().map(|c| c.case_id.clone()).collect();
            let crp = ds.column(Analyte::Crp);
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err("band edges must be strictly increasing".into());
            }
            let bands = tables_by_crp_band(&names, &results, &crp, &edges);
            let global = ImportanceTable::from_results(&names, &results, None);
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("beeswarm.csv"), beeswarm_csv(&ids, &x, &names, &results))?;
            fs::write(out_dir.join("band_importance.csv"), band_importance_csv(&bands))?;
            let mut text = String::from("feature,mean_abs_phi\n");
            for (f, v) in &global.entries {
                text.push_str(&format!("{f},{v:.9}\n"));
            }
            fs::write(out_dir.join("importance.csv"), &text)?;
            print!("{text}");
        }
        Command::CrpRule {
            fit,
            apply,
            threshold,
            out,
        } => {
            if let Some(p) = fit {
                let ds = load_csv(&p)?.labeled();
                let (rule, acc) = fit_crp_rule_values(&ds.column(Analyte::Crp), &ds.targets())?;
                emit(&format!("threshold {}\ntraining_accuracy {:.6}\n", rule.threshold, acc), out.as_deref())?;
            } else if let Some(p) = apply {
                let rule = CrpRule::new(threshold.expect("clap requires threshold"))?;
                let ds = load_csv(&p)?;
                let mut s = String::from("case_id,crp,prediction\n");
                for c in &ds.cases {
                    let crp = c.panel.get(Analyte::Crp);
                    s.push_str(&format!("{},{},{}\n", c.case_id, crp, rule.predict(crp)?.as_str()));
                }
                emit(&s, out.as_deref())?;
            } else {
                return Err("crp-rule needs --fit or --apply".into());
            }
        }
        Command::Describe {
            data,
            permutations,
            seed,
            out,
        } => {
            let ds = load_csv(&data)?.labeled();
            emit(&population_csv(&population_table(&ds, permutations, seed)?), out.as_deref())?;
        }
        Command::Serve { model, host, port } => {
            let mut bundles = model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
            let first = bundles.remove(0);
            let state = Arc::new(ServiceState::new(first));
            for b in bundles {
                state.insert(b, false);
            }
            let addr: std::net::SocketAddr = format!("{host}:{port}").parse()?;
            tokio::runtime::Runtime::new()?.block_on(super::service::serve(state, addr))?;
        }
    }
    Ok(())
}
