use icurisk::balance::{cv_train_eval, stratified_kfold, Recipe};
use icurisk::dataio::{generate_synthetic_cohort, stratified_split, StratumStats};
use icurisk::evalstats::{ablation, auroc};
use icurisk::interpret::{ale_first_order, ale_for_frame, AleBinning};
use icurisk::models::{
    default_grid, grid_search, FnModel, GbdtParams, HyperGrid, HyperValue, ModelArtifact, ModelSpec,
};
use icurisk::posterior::{nonsurvivor_priors, posterior_risk, Prior, PriorSpec};
use icurisk::preprocess::{ImputerChoice, PreprocessConfig};
use icurisk::{FeatureMatrix, Frame};
use rand::Rng;

fn cohort(n: usize, seed: u64) -> Frame {
    generate_synthetic_cohort(&StratumStats::bundled(), n, seed).unwrap()
}

fn small_gbdt() -> ModelSpec {
    ModelSpec::Gbdt(GbdtParams {
        n_iters: 40,
        ..Default::default()
    })
}

fn quick_recipe(frame: &Frame) -> Recipe {
    let mut r = Recipe::new(frame.feature_names(), small_gbdt());
    r.preprocess = PreprocessConfig {
        imputer: ImputerChoice::MedianMode,
        ..Default::default()
    };
    r
}

#[test]
fn cv_leaves_held_out_rows_untouched() {
    let frame = cohort(400, 1);
    let before = frame.fingerprint();
    let plan = stratified_kfold(&frame.labels().unwrap(), 5, 2).unwrap();
    let out = cv_train_eval(&frame, &plan, &quick_recipe(&frame), 3).unwrap();
    assert_eq!(frame.fingerprint(), before);
    assert_eq!(out.len(), 5);
    for (o, fold) in out.iter().zip(&plan.folds) {
        assert_eq!(o.probs.len(), fold.len());
        assert!(o.report.auroc > 0.6, "{}", o.report.auroc);
    }
}

#[test]
fn fitted_pipeline_survives_json_round_trip() {
    let frame = cohort(300, 4);
    let (train, test) = stratified_split(&frame, 0.3, 5).unwrap();
    let fitted = quick_recipe(&frame).fit(&train, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    fitted.model.save(&path).unwrap();
    let loaded = ModelArtifact::load(&path).unwrap();
    let x = fitted.preprocessor.prepare(&test).unwrap().matrix(&loaded.feature_order).unwrap();
    assert_eq!(loaded.predict_proba(&x).unwrap(), fitted.predict_frame(&test).unwrap());
    assert_eq!(loaded.meta.n_train, train.n_rows());
}

#[test]
fn one_point_grid_returns_that_point() {
    let frame = cohort(250, 7);
    let plan = stratified_kfold(&frame.labels().unwrap(), 3, 8).unwrap();
    let grid = HyperGrid::new(icurisk::models::Family::Gbdt)
        .axis("n_iters", vec![HyperValue::from(25.0)])
        .axis("learning_rate", vec![HyperValue::from(0.1)]);
    let res = grid_search(&frame, &quick_recipe(&frame), &grid, &plan, 9).unwrap();
    assert_eq!(res.table.len(), 1);
    match res.best_spec {
        ModelSpec::Gbdt(p) => assert_eq!((p.n_iters, p.learning_rate), (25, 0.1)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn grid_prefers_sane_learning_rate() {
    let frame = cohort(300, 10);
    let plan = stratified_kfold(&frame.labels().unwrap(), 3, 11).unwrap();
    let grid = HyperGrid::new(icurisk::models::Family::Gbdt)
        .axis("n_iters", vec![HyperValue::from(30.0)])
        .axis("learning_rate", vec![HyperValue::from(0.1), HyperValue::from(10.0)]);
    let res = grid_search(&frame, &quick_recipe(&frame), &grid, &plan, 12).unwrap();
    assert_eq!(res.table.len(), 2);
    match res.best_spec {
        ModelSpec::Gbdt(p) => assert_eq!(p.learning_rate, 0.1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn default_grids_are_valid() {
    for f in icurisk::models::Family::ALL {
        let g = default_grid(f);
        g.validate().unwrap();
        assert!(!g.lattice().unwrap().is_empty());
    }
}

#[test]
fn ablation_baseline_matches_direct_fit() {
    let frame = cohort(300, 13);
    let (train, test) = stratified_split(&frame, 0.3, 14).unwrap();
    let recipe = quick_recipe(&frame);
    let rep = ablation(&train, &test, &recipe, 15).unwrap();
    let probs = recipe.fit(&train, 15).unwrap().predict_frame(&test).unwrap();
    let direct = auroc(&probs, &test.labels().unwrap()).unwrap();
    assert!((rep.baseline_auroc - direct).abs() <= 1e-12);
    assert_eq!(rep.entries.len(), frame.feature_names().len());
    assert!(rep.entries.windows(2).all(|w| w[0].delta >= w[1].delta));
    for e in &rep.entries {
        assert!((e.delta - (rep.baseline_auroc - e.auroc_without)).abs() < 1e-15);
    }
}

#[test]
fn point_mass_priors_collapse_to_the_fitted_model() {
    let frame = cohort(300, 16);
    let fitted = quick_recipe(&frame).fit(&frame, 17).unwrap();
    let model = &fitted.model;
    let row: Vec<f64> = model.feature_info.iter().map(|f| (f.range[0] + f.range[1]) / 2.0).collect();
    let mut priors = PriorSpec::default();
    for (name, &v) in model.feature_order.iter().zip(&row) {
        priors.insert(name.clone(), Prior::PointMass { value: v });
    }
    let s = posterior_risk(model, &priors, 500, 18).unwrap();
    let p = model.predict_one(&row).unwrap();
    assert_eq!((s.mean, s.q025, s.q975, s.sd), (p, p, p, 0.0));
}

#[test]
fn nonsurvivor_priors_track_the_deceased_stratum() {
    let frame = cohort(4000, 19);
    let priors = nonsurvivor_priors(&frame).unwrap();
    match priors.get("apsiii").unwrap() {
        Prior::TruncNormal { mu, sd, integer, .. } => {
            assert!((mu - 64.28).abs() < 3.0, "{mu}");
            assert!((sd - 20.24).abs() < 2.0, "{sd}");
            assert!(*integer);
        }
        other => panic!("{other:?}"),
    }
    match priors.get("vasopressin").unwrap() {
        Prior::Bernoulli { p } => assert!((p - 0.52).abs() < 0.05),
        other => panic!("{other:?}"),
    }
}

#[test]
fn identical_deceased_rows_give_point_masses() {
    let rows: Vec<Vec<f64>> = (0..6).map(|i| if i < 3 { vec![2.0, 1.0] } else { vec![i as f64, 0.0] }).collect();
    let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
    let specs = vec![
        icurisk::ColumnSpec::new("a", icurisk::ColumnKind::Continuous),
        icurisk::ColumnSpec::new("b", icurisk::ColumnKind::Binary),
    ];
    let frame = Frame::from_matrix(&x, &specs, Some(("y", &[1, 1, 1, 0, 0, 0]))).unwrap();
    let p = nonsurvivor_priors(&frame).unwrap();
    assert_eq!(p.get("a"), Some(&Prior::PointMass { value: 2.0 }));
    assert_eq!(p.get("b"), Some(&Prior::PointMass { value: 1.0 }));
}

#[test]
fn ale_recovers_additive_logistic_effect() {
    let mut rng = icurisk::seed::rng(20);
    let rows: Vec<Vec<f64>> = (0..2000)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let x = FeatureMatrix::from_rows(vec!["x1".into(), "x2".into()], &rows).unwrap();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let m = FnModel::new(x.names().to_vec(), move |r: &[f64]| sig(3.0 * r[0]));
    let c = ale_first_order(&m, &x, "x1", AleBinning::Quantile { n_bins: 10 }).unwrap();
    let center: f64 = rows.iter().map(|r| sig(3.0 * r[0])).sum::<f64>() / 2000.0;
    let err = c
        .edges
        .iter()
        .zip(&c.ale)
        .map(|(&e, &a)| (a - (sig(3.0 * e) - center)).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.02, "{err}");
}

#[test]
fn ale_on_fitted_pipeline_counts_every_training_row() {
    let frame = cohort(300, 21);
    let fitted = quick_recipe(&frame).fit(&frame, 22).unwrap();
    let prepared = fitted.preprocessor.prepare(&frame).unwrap();
    let c = ale_for_frame(&fitted.model, &prepared, "gcs_eye_opening").unwrap();
    assert_eq!(c.n(), 300);
    assert!(c.edges.iter().all(|e| e.fract() == 0.0));
}
