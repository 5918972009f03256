use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use icurisk::models::ModelArtifact;
use icurisk::posterior::{posterior_risk, PosteriorSummary, Prior, PriorSpec};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_icurisk");

/// Small cohort and one-point grids so a full run takes a few seconds.
fn fast_config(out: &Path, extra: &str) -> String {
    format!(
        r#"seed = 11
output_dir = {out:?}

[input]
kind = "synthetic"
n = 400

[split]
folds = 3

[evaluation]
bootstrap_b = 200

[posterior]
n = 2000

[models.grids.logistic]
c = [1.0]
penalty = ["l2"]

[models.grids.forest]
n_trees = [30]

[models.grids.gbdt]
n_iters = [40]

[models.grids.mlp]
hidden_units = [8]
{extra}"#,
        out = out.display().to_string()
    )
}

fn icurisk(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn run_with(dir: &Path, extra: &str, args: &[&str]) -> (PathBuf, Output) {
    let out = dir.join("run");
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, fast_config(&out, extra)).unwrap();
    let mut all = vec!["run", "--config", cfg.to_str().unwrap()];
    all.extend_from_slice(args);
    (out, icurisk(&all))
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr:\n{}", o.status, String::from_utf8_lossy(&o.stderr));
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn attr_values(svg: &str, attr: &str) -> Vec<String> {
    svg.split(&format!("{attr}=\""))
        .skip(1)
        .map(|s| s.split('"').next().unwrap().to_string())
        .collect()
}

#[test]
fn run_and_report_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (out, o) = run_with(dir.path(), "", &[]);
    assert_ok(&o);
    let report = read_json(&out.join("run_report.json"));

    let schema = read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/run_report.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");

    assert_eq!(report["models"].as_array().unwrap().len(), 5);
    for m in report["models"].as_array().unwrap() {
        let art = ModelArtifact::load(out.join(m["artifact"].as_str().unwrap())).unwrap();
        assert_eq!(art.family.to_string(), m["family"].as_str().unwrap());
        assert_eq!(art.threshold, m["threshold"].as_f64().unwrap());
    }
    assert_eq!(report["split"]["n_train"].as_u64().unwrap() + report["split"]["n_test"].as_u64().unwrap(), 400);
    assert!(!out.join("FAILED").exists());

    let r = icurisk(&["report", out.to_str().unwrap()]);
    assert_ok(&r);
    let summary = std::fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(summary.contains("| gbdt |"));

    let roc = std::fs::read_to_string(out.join("plots/roc.svg")).unwrap();
    assert_eq!(attr_values(&roc, "data-family").len(), 5);
    assert!(attr_values(&roc, "data-start").iter().all(|s| s == "0,0"));
    assert!(attr_values(&roc, "data-end").iter().all(|s| s == "1,1"));

    let hist = std::fs::read_to_string(out.join("plots/posterior.svg")).unwrap();
    let area: f64 = attr_values(&hist, "data-area").iter().map(|s| s.parse::<f64>().unwrap()).sum();
    assert!((area - 1.0).abs() < 1e-9, "area {area}");

    let abl = std::fs::read_to_string(out.join("plots/ablation.svg")).unwrap();
    let deltas: Vec<f64> = attr_values(&abl, "data-delta").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(deltas.len(), report["selection"]["selected"].as_array().unwrap().len());
    assert!(deltas.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn explicit_feature_list_skips_selection() {
    let dir = tempfile::tempdir().unwrap();
    let (out, o) = run_with(
        dir.path(),
        "",
        &[
            "--set",
            r#"selection.features=["apsiii", "age", "vasopressin"]"#,
            "--set",
            r#"models.families=["gbdt", "logistic"]"#,
        ],
    );
    assert_ok(&o);
    let report = read_json(&out.join("run_report.json"));
    assert_eq!(report["selection"]["method"], "explicit");
    assert!(report["selection"]["anova"].is_null());
    assert!(!out.join("selection.csv").exists());
    let art = ModelArtifact::load(out.join("models/gbdt.json")).unwrap();
    assert_eq!(art.feature_order, ["apsiii", "age", "vasopressin"]);
    let priors = report["priors"].as_object().unwrap();
    assert_eq!(priors.len(), 3);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (out, o) = run_with(dir.path(), "bogus_key = 1\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = icurisk(&["run", "--set", "split.test_frac=1.5", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    std::fs::write(&csv, "apsiii,died_28d\n50,0\n").unwrap();
    let schema = dir.path().join("cohort.schema.toml");
    std::fs::write(
        &schema,
        "label = \"died_28d\"\n\n[[columns]]\nname = \"apsiii\"\nkind = \"score\"\n\n[[columns]]\nname = \"age\"\nkind = \"continuous\"\n\n[[columns]]\nname = \"died_28d\"\nkind = \"binary\"\n",
    )
    .unwrap();
    let extra = format!(
        "\n[input]\nkind = \"csv\"\npath = {:?}\nschema = {:?}\n",
        csv.display().to_string(),
        schema.display().to_string()
    );
    let cfg = fast_config(&dir.path().join("run"), "").replace("[input]\nkind = \"synthetic\"\nn = 400\n", "");
    std::fs::write(dir.path().join("config.toml"), format!("{cfg}{extra}")).unwrap();
    let o = icurisk(&["run", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let marker = std::fs::read_to_string(dir.path().join("run/FAILED")).unwrap();
    assert!(marker.starts_with("stage: "), "{marker}");
}

#[test]
fn stage_failure_exits_4_and_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    let priors = dir.path().join("priors.json");
    let mut spec = PriorSpec::default();
    spec.insert("apsiii", Prior::PointMass { value: 60.0 });
    std::fs::write(&priors, spec.to_json().unwrap()).unwrap();
    let extra = format!("\n[posterior]\npriors = {:?}\n", priors.display().to_string());
    let cfg = fast_config(&dir.path().join("run"), "").replace("[posterior]\nn = 2000\n", "");
    std::fs::write(dir.path().join("config.toml"), format!("{cfg}{extra}")).unwrap();
    let o = icurisk(&["run", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("run");
    let marker = std::fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.starts_with("stage: posterior"), "{marker}");
    assert!(!out.join("run_report.json").exists());

    let r = icurisk(&["report", out.to_str().unwrap()]);
    assert!(!r.status.success());
}

#[test]
fn generate_then_run_on_csv_then_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    let g = icurisk(&["generate", "--n", "400", "--seed", "3", "--out", csv.to_str().unwrap()]);
    assert_ok(&g);
    let schema = dir.path().join("cohort.schema.toml");
    assert!(schema.exists());

    let extra = format!(
        "\n[input]\nkind = \"csv\"\npath = {:?}\nschema = {:?}\n",
        csv.display().to_string(),
        schema.display().to_string()
    );
    let out = dir.path().join("run");
    let cfg = fast_config(&out, "").replace("[input]\nkind = \"synthetic\"\nn = 400\n", "");
    std::fs::write(dir.path().join("config.toml"), format!("{cfg}{extra}")).unwrap();
    let o = icurisk(&["run", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert_ok(&o);
    let report = read_json(&out.join("run_report.json"));
    assert_eq!(report["cohort"]["n"], 400);

    let model = out.join("models/gbdt.json");
    let priors = out.join("priors.json");
    let p = icurisk(&[
        "posterior",
        "--model",
        model.to_str().unwrap(),
        "--priors",
        priors.to_str().unwrap(),
        "--n",
        "3000",
        "--seed",
        "8",
    ]);
    assert_ok(&p);
    let got: PosteriorSummary = serde_json::from_slice(&p.stdout).unwrap();
    let spec = PriorSpec::from_json(&std::fs::read_to_string(&priors).unwrap()).unwrap();
    let expected = posterior_risk(&ModelArtifact::load(&model).unwrap(), &spec, 3000, 8).unwrap();
    assert_eq!(got, expected);
}
