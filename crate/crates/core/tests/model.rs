mod support;

use dpebm::postprocess::edit;
use dpebm::{
    AccountantKind, EditCommand, Error, FeatureBins, FeatureSpec, GamModel, Link, Model, PrivacyBudget, ShapeFunction,
    Task, TrainConfig, Trainer, Value,
};
use dpebm::model::FeatureTerm;
use proptest::prelude::*;
use support::{synthetic_classification, synthetic_regression};

fn private_model(task: Task) -> (dpebm::Data, Model) {
    let d = match task {
        Task::Regression => synthetic_regression(400, 31),
        Task::BinaryClassification => synthetic_classification(400, 31),
    };
    let cfg = TrainConfig { epochs: 12, task, seed: 5, ..Default::default() };
    let budget = PrivacyBudget::new(3.0, 1e-6, 0.1).unwrap();
    let model = Trainer::new(cfg).private(budget, AccountantKind::Gdp).fit(&d).unwrap().model;
    (d, model)
}

#[test]
fn contributions_add_up_to_the_score() {
    for task in [Task::Regression, Task::BinaryClassification] {
        let (d, model) = private_model(task);
        let scores = model.raw_scores(&d).unwrap();
        for (i, &score) in scores.iter().enumerate() {
            let row = d.row(i);
            let parts = model.contributions(&row).unwrap();
            let total = parts.iter().fold(model.intercept(), |acc, c| acc + c.score);
            assert_eq!(total, score);
            assert_eq!(model.raw_score(&row).unwrap(), score);
            let p = model.predict(&row).unwrap();
            match task {
                Task::Regression => assert_eq!(p, score),
                Task::BinaryClassification => assert!((p - 1.0 / (1.0 + (-score).exp())).abs() < 1e-15),
            }
        }
    }
}

#[test]
fn json_round_trip_is_exact() {
    let (_, model) = private_model(Task::BinaryClassification);
    let model = edit(&model, &EditCommand::add("b", 1..3, 1e-17 + 0.1)).unwrap();
    let text = model.to_json().unwrap();
    let back = Model::from_json(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_json().unwrap(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    assert_eq!(Model::load(&path).unwrap(), model);
}

#[test]
fn model_file_has_the_documented_fields() {
    let (_, model) = private_model(Task::Regression);
    let v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["link"], "identity");
    assert_eq!(v["privacy"]["accountant"], "gdp");
    let f = &v["features"][0];
    for key in ["name", "kind", "edges", "counts", "shape", "is_private", "noise_scale"] {
        assert!(f.get(key).is_some(), "missing {key}");
    }
    let g = &v["features"][3];
    assert_eq!(g["kind"], "categorical");
    assert!(g.get("vocabulary").is_some());
}

#[test]
fn rejects_foreign_files() {
    let (_, model) = private_model(Task::Regression);
    let mut v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    v["schema_version"] = 2.into();
    assert!(matches!(Model::from_json(&v.to_string()), Err(Error::Version { found: 2, expected: 1 })));
    v["schema_version"] = 1.into();
    v["surprise"] = true.into();
    assert!(Model::from_json(&v.to_string()).is_err());
    v.as_object_mut().unwrap().remove("surprise");
    v["features"][0]["shape"] = serde_json::json!([1.0]);
    assert!(Model::from_json(&v.to_string()).is_err());
    assert!(Model::from_json("{}").is_err());
}

#[test]
fn scoring_checks_its_input() {
    let (d, model) = private_model(Task::Regression);
    assert!(model.raw_score(&[Value::Number(0.5)]).is_err());
    let mut row = d.row(0);
    row[3] = Value::Category(17);
    assert!(model.raw_score(&row).is_err());
    let other = synthetic_regression(10, 1);
    assert!(model.check_features(other.features()).is_ok());
    let renamed: Vec<FeatureSpec<f64>> = other
        .features()
        .iter()
        .map(|s| FeatureSpec { name: format!("{}_", s.name), ..s.clone() })
        .collect();
    assert!(model.check_features(&renamed).is_err());
}

#[test]
fn shapes_must_match_their_bins() {
    let spec = FeatureSpec::numeric("x", 0.0, 1.0).unwrap();
    let bins = FeatureBins::from_parts(spec, vec![0.0, 0.5, 1.0], vec![1.0, 1.0], false, 0.0).unwrap();
    assert!(FeatureTerm::new(bins.clone(), ShapeFunction::zeros(3)).is_err());
    assert!(ShapeFunction::new(vec![f64::INFINITY]).is_err());
    let term = FeatureTerm::new(bins, ShapeFunction::new(vec![-1.0, 2.0]).unwrap()).unwrap();
    let m = GamModel::new(Link::Identity, 0.5, 1.0, vec![term]).unwrap();
    assert_eq!(m.raw_score(&[Value::Number(0.7)]).unwrap(), 2.5);
    assert!(GamModel::<f64>::new(Link::Identity, 0.0, 1.0, vec![]).is_err());
}

proptest! {
    #[test]
    fn arbitrary_shapes_survive_serialization(values in proptest::collection::vec(-1e6f64..1e6, 2..5), intercept in -1e3f64..1e3) {
        let spec = FeatureSpec::numeric("x", -1.0, 1.0).unwrap();
        let n = values.len();
        let edges: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let bins = FeatureBins::from_parts(spec, edges, vec![3.3; n], true, 0.7).unwrap();
        let term = FeatureTerm::new(bins, ShapeFunction::new(values).unwrap()).unwrap();
        let m = GamModel::new(Link::Logistic, intercept, 1.0, vec![term]).unwrap();
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}
