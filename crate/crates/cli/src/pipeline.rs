//! End-to-end run: load or generate a cohort, split, compare strata, select
//! features, tune and fit every family, evaluate, ablate, explain and
//! simulate posterior risk. Every artifact is written under the run's output
//! directory as soon as it exists; a failure leaves a `FAILED` marker next to
//! whatever was already written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use icurisk::balance::{cv_train_eval, stratified_kfold, FittedPipeline, Recipe, SmoteConfig};
use icurisk::dataio::{self, generate_synthetic_cohort, stratified_split, StratumStats};
use icurisk::evalstats::{ablation, evaluate, roc_curve, welch_t_test, AblationReport, BootstrapSpec, EvalReport};
use icurisk::featselect::{two_stage_select, FeatureRanking};
use icurisk::interpret::{ale_first_order, AleBinning, AleCurve};
use icurisk::models::{choose_threshold, grid_search, Family, GridRow, HyperValue};
use icurisk::posterior::{nonsurvivor_priors, posterior_risk, PosteriorSummary, PriorSpec};
use icurisk::preprocess::FittedPreprocessor;
use icurisk::seed::derive_seed;
use icurisk::stats;
use icurisk::{ColumnKind, Frame, Schema};
use serde::{Deserialize, Serialize};

use crate::config::{InputConfig, RunConfig, ThresholdSource};
use crate::error::CliError;

pub const REPORT_FORMAT: u32 = 1;
pub const REPORT_FILE: &str = "run_report.json";
pub const FAILED_FILE: &str = "FAILED";
pub const TRAIN_FEATURES_FILE: &str = "train_features.csv";
pub const TRAIN_SCHEMA_FILE: &str = "train_features.schema.toml";
pub const PRIORS_FILE: &str = "priors.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub source: String,
    pub n: usize,
    pub n_positive: usize,
    pub prevalence: f64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub test_frac: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_prevalence: f64,
    pub test_prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub feature: String,
    pub survivor_mean: f64,
    pub survivor_sd: f64,
    pub nonsurvivor_mean: f64,
    pub nonsurvivor_sd: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    /// `two_stage` or `explicit`.
    pub method: String,
    pub k1: usize,
    pub k2: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anova: Option<FeatureRanking>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gini: Option<FeatureRanking>,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub family: Family,
    pub artifact: String,
    pub hyperparams: BTreeMap<String, HyperValue>,
    pub cv_mean_auroc: f64,
    pub grid: Vec<GridRow>,
    pub threshold: f64,
    pub converged: bool,
    pub flags: Vec<String>,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: u32,
    pub seed: u64,
    /// The resolved configuration minus `output_dir`, so the report does not
    /// depend on where it was written.
    pub config: serde_json::Value,
    pub cohort: CohortSummary,
    pub split: SplitSummary,
    pub stratum_tests: Vec<StratumRow>,
    pub selection: SelectionSummary,
    pub models: Vec<ModelSummary>,
    pub primary_family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationReport>,
    pub ale: Vec<AleCurve>,
    pub priors: PriorSpec,
    pub posterior: PosteriorSummary,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Stage {
            stage: "write".into(),
            source: e.into(),
        })
    }

    pub fn model(&self, family: Family) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.family == family)
    }
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        fs::write(&p, contents).map_err(CliError::io(&p))?;
        Ok(p)
    }

    fn csv<F>(&self, name: &str, header: &[&str], fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let res = w.write_record(header).and_then(|_| fill(&mut w));
        res.map_err(|e| CliError::stage("write")(e.into()))?;
        let bytes = w.into_inner().map_err(|e| CliError::stage("write")(icurisk::Error::Serde(e.to_string())))?;
        self.write(name, bytes).map(|_| ())
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn load_cohort(input: &InputConfig, seed: u64) -> Result<(Frame, String), CliError> {
    match input {
        InputConfig::Synthetic { stats, n } => {
            let (st, source) = match stats {
                Some(p) => (StratumStats::load(p).map_err(CliError::Data)?, p.display().to_string()),
                None => (StratumStats::bundled(), "builtin".to_string()),
            };
            let frame = generate_synthetic_cohort(&st, *n, derive_seed(seed, "cohort")).map_err(CliError::Data)?;
            Ok((frame, format!("synthetic:{source}")))
        }
        InputConfig::Csv {
            path,
            schema,
            missing_token,
        } => {
            let schema = Schema::load(schema).map_err(CliError::Data)?;
            if schema.label.is_none() {
                return Err(CliError::Config("CSV schema must name a label column".into()));
            }
            let frame = dataio::load_csv(path, &schema, missing_token).map_err(CliError::Data)?;
            Ok((frame, format!("csv:{}", path.display())))
        }
    }
}

fn stratum_tests(frame: &Frame, warnings: &mut Vec<String>) -> Result<Vec<StratumRow>, CliError> {
    let y = frame.labels().map_err(CliError::Data)?;
    let mut rows = Vec::new();
    for name in frame.feature_names() {
        let col = frame.require(&name).map_err(CliError::Data)?;
        if col.kind() == ColumnKind::Categorical {
            continue;
        }
        let pick = |label: u8| -> Vec<f64> {
            (0..y.len())
                .filter(|&i| y[i] == label && !col.missing[i])
                .map(|i| col.values[i])
                .collect()
        };
        let (alive, dead) = (pick(0), pick(1));
        let w = match welch_t_test(&alive, &dead) {
            Ok(w) => w,
            Err(e) => {
                warnings.push(format!("t-test skipped for {name}: {e}"));
                continue;
            }
        };
        rows.push(StratumRow {
            feature: name,
            survivor_mean: stats::mean(&alive),
            survivor_sd: stats::sample_sd(&alive),
            nonsurvivor_mean: stats::mean(&dead),
            nonsurvivor_sd: stats::sample_sd(&dead),
            t: w.t,
            df: w.df,
            p: w.p,
        });
    }
    Ok(rows)
}

fn prevalence(y: &[u8]) -> f64 {
    y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64
}

/// Runs every stage and writes all artifacts. On error a `FAILED` marker
/// naming the stage is written before the error is returned.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, CliError> {
    config.validate()?;
    let out = Out {
        dir: config.output_dir.clone(),
    };
    fs::create_dir_all(&out.dir).map_err(CliError::io(&out.dir))?;
    let _ = fs::remove_file(out.path(FAILED_FILE));
    match run_stages(config, &out) {
        Ok(r) => Ok(r),
        Err(e) => {
            let _ = fs::write(out.path(FAILED_FILE), format!("stage: {}\nerror: {e}\n", e.stage_name()));
            Err(e)
        }
    }
}

fn run_stages(config: &RunConfig, out: &Out) -> Result<RunReport, CliError> {
    let seed = config.seed;
    let mut warnings = Vec::new();
    out.write("config.resolved.toml", config.to_toml_string()?)?;

    // 1. cohort
    let (frame, source) = load_cohort(&config.input, seed)?;
    let labels = frame.labels().map_err(CliError::Data)?;
    if matches!(config.input, InputConfig::Synthetic { .. }) {
        let p = out.path("cohort.csv");
        dataio::write_csv(&p, &frame, "").map_err(CliError::stage("write"))?;
    }
    let cohort = CohortSummary {
        source,
        n: frame.n_rows(),
        n_positive: labels.iter().filter(|&&v| v == 1).count(),
        prevalence: prevalence(&labels),
        fingerprint: frame.fingerprint(),
    };
    tracing::info!(n = cohort.n, prevalence = cohort.prevalence, "cohort ready");

    // 2. survivor vs non-survivor comparison
    let stratum_rows = stratum_tests(&frame, &mut warnings)?;
    out.csv(
        "stratum_tests.csv",
        &["feature", "survivor_mean", "survivor_sd", "nonsurvivor_mean", "nonsurvivor_sd", "t", "df", "p"],
        |w| {
            for r in &stratum_rows {
                w.write_record([
                    r.feature.clone(),
                    fmt(r.survivor_mean),
                    fmt(r.survivor_sd),
                    fmt(r.nonsurvivor_mean),
                    fmt(r.nonsurvivor_sd),
                    fmt(r.t),
                    fmt(r.df),
                    fmt(r.p),
                ])?;
            }
            Ok(())
        },
    )?;

    // 3. split
    let (train, test) =
        stratified_split(&frame, config.split.test_frac, derive_seed(seed, "split")).map_err(CliError::stage("split"))?;
    let train_y = train.labels().map_err(CliError::Data)?;
    let test_y = test.labels().map_err(CliError::Data)?;
    let split = SplitSummary {
        test_frac: config.split.test_frac,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        train_prevalence: prevalence(&train_y),
        test_prevalence: prevalence(&test_y),
    };

    // 4. selection on the imputed, encoded training split
    let all_features = frame.feature_names();
    let selection = match &config.selection.features {
        Some(list) => {
            for f in list {
                frame.require(f).map_err(|e| CliError::Config(e.to_string()))?;
            }
            SelectionSummary {
                method: "explicit".into(),
                k1: list.len(),
                k2: list.len(),
                anova: None,
                gini: None,
                selected: list.clone(),
            }
        }
        None => {
            let d = all_features.len();
            let k1 = config.selection.k1.min(d);
            let k2 = config.selection.k2.min(k1);
            if (k1, k2) != (config.selection.k1, config.selection.k2) {
                warnings.push(format!(
                    "selection sizes clamped to the {d} available features (k1 {k1}, k2 {k2})"
                ));
            }
            let (_, prepared) = FittedPreprocessor::fit(
                &train,
                &all_features,
                &config.preprocess,
                derive_seed(seed, "select-impute"),
            )
            .map_err(CliError::stage("preprocess"))?;
            let sel = two_stage_select(&prepared, k1, k2, derive_seed(seed, "select")).map_err(CliError::stage("select"))?;
            SelectionSummary {
                method: "two_stage".into(),
                k1,
                k2,
                anova: Some(sel.anova),
                gini: Some(sel.gini),
                selected: sel.selected,
            }
        }
    };
    if selection.anova.is_some() {
        out.csv("selection.csv", &["feature", "stage", "score", "rank"], |w| {
            for r in selection.anova.iter().chain(&selection.gini) {
                r.write_csv(w).map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))?;
            }
            Ok(())
        })?;
    }
    let features = selection.selected.clone();

    // 5. tuning and final fits
    let plan = stratified_kfold(&train_y, config.split.folds, derive_seed(seed, "folds")).map_err(CliError::stage("folds"))?;
    out.write("fold_plan.txt", plan.to_text())?;
    let smote = SmoteConfig {
        k_neighbors: config.smote.k_neighbors,
    };
    let base = |in_resample: bool, family: Family| {
        let mut r = Recipe::new(features.clone(), icurisk::models::ModelSpec::default_for(family));
        r.preprocess = config.preprocess;
        r.smote = in_resample.then_some(smote);
        r
    };

    let mut models = Vec::new();
    let mut eval_train = Vec::new();
    let mut eval_test = Vec::new();
    let mut primary: Option<(Recipe, FittedPipeline, u64)> = None;
    for &family in &config.models.families {
        let tag = family.as_str();
        let cv_recipe = base(config.smote.placement.in_folds(), family);
        let grid = config.models.grid(family);
        let tuned = grid_search(&train, &cv_recipe, &grid, &plan, derive_seed(seed, &format!("grid-{tag}")))
            .map_err(CliError::stage(format!("grid:{tag}")))?;
        out.csv(&format!("grid_{tag}.csv"), &["params", "mean_auroc", "fold_auroc"], |w| {
            for row in &tuned.table {
                let params: Vec<String> = row.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let folds: Vec<String> = row.fold_auroc.iter().map(|&v| fmt(v)).collect();
                w.write_record([params.join(";"), fmt(row.mean_auroc), folds.join(";")])?;
            }
            Ok(())
        })?;
        let cv_mean = tuned
            .table
            .iter()
            .find(|r| r.params == tuned.best)
            .map_or(f64::NAN, |r| r.mean_auroc);

        let mut final_recipe = base(config.smote.placement.in_final(), family);
        final_recipe.model = tuned.best_spec;
        let fit_seed = derive_seed(seed, &format!("final-{tag}"));
        let mut fitted = final_recipe.fit(&train, fit_seed).map_err(CliError::stage(format!("fit:{tag}")))?;

        let test_probs = fitted.predict_frame(&test).map_err(CliError::stage(format!("evaluate:{tag}")))?;
        let threshold = match config.threshold.source {
            ThresholdSource::Test => choose_threshold(&test_probs, &test_y, config.threshold.floor),
            ThresholdSource::OutOfFold => {
                let mut oof_recipe = final_recipe.clone();
                oof_recipe.smote = config.smote.placement.in_folds().then_some(smote);
                let folds = cv_train_eval(&train, &plan, &oof_recipe, derive_seed(seed, &format!("oof-{tag}")))
                    .map_err(CliError::stage(format!("threshold:{tag}")))?;
                let mut oof = vec![0.0; train.n_rows()];
                for f in &folds {
                    for (&i, &p) in f.held_out.iter().zip(&f.probs) {
                        oof[i] = p;
                    }
                }
                choose_threshold(&oof, &train_y, config.threshold.floor)
            }
        }
        .map_err(CliError::stage(format!("threshold:{tag}")))?;
        fitted.model.threshold = threshold;

        let boot = |split: &str| BootstrapSpec {
            replicates: config.evaluation.bootstrap_b,
            alpha: config.evaluation.alpha,
            seed: derive_seed(seed, &format!("bootstrap-{split}-{tag}")),
        };
        let train_probs = fitted.predict_frame(&train).map_err(CliError::stage(format!("evaluate:{tag}")))?;
        let train_report = evaluate(&train_probs, &train_y, threshold, Some(boot("train")))
            .map_err(CliError::stage(format!("evaluate:{tag}")))?;
        let test_report = evaluate(&test_probs, &test_y, threshold, Some(boot("test")))
            .map_err(CliError::stage(format!("evaluate:{tag}")))?;
        let roc = roc_curve(&test_probs, &test_y).map_err(CliError::stage(format!("evaluate:{tag}")))?;
        out.csv(&format!("roc_{tag}.csv"), &["fpr", "tpr"], |w| {
            for (x, y) in &roc {
                w.write_record([fmt(*x), fmt(*y)])?;
            }
            Ok(())
        })?;

        let artifact = format!("models/{tag}.json");
        out.write(&artifact, fitted.model.to_json().map_err(CliError::stage("write"))?)?;
        out.write(
            &format!("models/{tag}.preprocess.json"),
            fitted.preprocessor.to_json().map_err(CliError::stage("write"))?,
        )?;
        if !fitted.model.meta.converged {
            let msg = format!("{tag}: {}", fitted.model.meta.flags.join("; "));
            tracing::warn!("{msg}");
            warnings.push(msg);
        }
        tracing::info!(family = tag, auroc = test_report.auroc, "model evaluated");
        eval_train.push((family, train_report.clone()));
        eval_test.push((family, test_report.clone()));
        models.push(ModelSummary {
            family,
            artifact,
            hyperparams: tuned.best.clone(),
            cv_mean_auroc: cv_mean,
            grid: tuned.table,
            threshold,
            converged: fitted.model.meta.converged,
            flags: fitted.model.meta.flags.clone(),
            train: train_report,
            test: test_report,
        });
        if family == config.models.primary {
            primary = Some((final_recipe, fitted, fit_seed));
        }
    }
    for (name, rows) in [("eval_train.csv", &eval_train), ("eval_test.csv", &eval_test)] {
        let mut header = vec!["family"];
        header.extend(EvalReport::CSV_HEADER);
        out.csv(name, &header, |w| {
            for (f, r) in rows.iter() {
                let mut rec = vec![f.to_string()];
                rec.extend(r.csv_fields());
                w.write_record(rec)?;
            }
            Ok(())
        })?;
    }
    let (recipe, fitted, fit_seed) = primary.expect("primary family validated to be in the family list");

    // 6. ablation with frozen hyperparameters
    let ablation_report = if config.evaluation.ablation && features.len() >= 2 {
        let rep = ablation(&train, &test, &recipe, fit_seed).map_err(CliError::stage("ablation"))?;
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).map_err(CliError::stage("write"))?;
        out.write("ablation.csv", buf)?;
        Some(rep)
    } else {
        if config.evaluation.ablation {
            warnings.push("ablation skipped: fewer than two features".into());
        }
        None
    };

    // 7. interpretation on the encoded training split
    let prepared_train = fitted.preprocessor.prepare(&train).map_err(CliError::stage("ale"))?;
    {
        let p = out.path(TRAIN_FEATURES_FILE);
        dataio::write_csv(&p, &prepared_train, "").map_err(CliError::stage("write"))?;
        let schema = prepared_train.schema().to_toml_string().map_err(CliError::stage("write"))?;
        out.write(TRAIN_SCHEMA_FILE, schema)?;
    }
    let x_train = prepared_train
        .matrix(&fitted.model.feature_order)
        .map_err(CliError::stage("ale"))?;
    let ale_features = config.ale.features.clone().unwrap_or_else(|| fitted.model.feature_order.clone());
    let mut curves = Vec::new();
    for name in &ale_features {
        let kind = prepared_train
            .require(name)
            .map_err(|e| CliError::Config(format!("ale feature: {e}")))?
            .kind();
        let binning = match AleBinning::for_kind(kind) {
            AleBinning::Quantile { .. } => AleBinning::Quantile {
                n_bins: config.ale.n_bins,
            },
            b => b,
        };
        match ale_first_order(&fitted.model, &x_train, name, binning) {
            Ok(c) => {
                let mut buf = Vec::new();
                c.write_csv(&mut buf).map_err(CliError::stage("write"))?;
                out.write(&format!("ale/{name}.csv"), buf)?;
                curves.push(c);
            }
            Err(icurisk::Error::Degenerate(m)) => warnings.push(format!("ALE skipped for {name}: {m}")),
            Err(e) => return Err(CliError::stage("ale")(e)),
        }
    }

    // 8. posterior under non-survivor priors
    let priors = match &config.posterior.priors {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::io(p))?;
            PriorSpec::from_json(&text).map_err(|e| CliError::Config(format!("priors: {e}")))?
        }
        None => nonsurvivor_priors(&prepared_train).map_err(CliError::stage("posterior"))?,
    };
    out.write(PRIORS_FILE, priors.to_json().map_err(CliError::stage("write"))?)?;
    let posterior = posterior_risk(&fitted.model, &priors, config.posterior.n, derive_seed(seed, "posterior"))
        .map_err(CliError::stage("posterior"))?;
    out.write(
        "posterior.json",
        serde_json::to_string_pretty(&posterior).map_err(|e| CliError::stage("write")(e.into()))?,
    )?;
    out.csv("posterior_summary.csv", &["statistic", "value"], |w| {
        for (k, v) in [
            ("n_samples", posterior.n_samples as f64),
            ("mean", posterior.mean),
            ("sd", posterior.sd),
            ("median", posterior.median),
            ("q025", posterior.q025),
            ("q975", posterior.q975),
        ] {
            w.write_record([k.to_string(), fmt(v)])?;
        }
        Ok(())
    })?;
    out.csv("posterior_hist.csv", &["bin_low", "bin_high", "count"], |w| {
        let h = &posterior.histogram;
        for (k, c) in h.counts.iter().enumerate() {
            w.write_record([fmt(h.edges[k]), fmt(h.edges[k + 1]), c.to_string()])?;
        }
        Ok(())
    })?;

    let mut cfg_doc = serde_json::to_value(config).map_err(|e| CliError::stage("write")(e.into()))?;
    if let Some(o) = cfg_doc.as_object_mut() {
        o.remove("output_dir");
    }
    let report = RunReport {
        format: REPORT_FORMAT,
        seed,
        config: cfg_doc,
        cohort,
        split,
        stratum_tests: stratum_rows,
        selection,
        models,
        primary_family: config.models.primary,
        ablation: ablation_report,
        ale: curves,
        priors,
        posterior,
        warnings,
    };
    out.write(REPORT_FILE, report.to_json()?)?;
    Ok(report)
}

/// Reads a finished run's report.
pub fn load_report(dir: &Path) -> Result<RunReport, CliError> {
    let p = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&p).map_err(CliError::io(&p))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(e.into()))
}
