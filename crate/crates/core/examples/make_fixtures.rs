//! Regenerates the shared model fixture corpus.
//!
//! ```text
//! cargo run -p dpebm-core --example make_fixtures -- fixtures
//! ```
//!
//! Writes trained models to `<dir>/models` and, for every model there
//! (including hand-written ones), the expected monotone projections and
//! per-row scores to `<dir>/expected`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dpebm::postprocess::{edit, enforce_monotone};
use dpebm::{
    AccountantKind, Dataset, EditCommand, FeatureSpec, Model, MonotoneDirection, PrivacyBudget, Task, TrainConfig,
    Trainer, Value,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn synthetic(task: Task, seed: u64) -> Dataset<f64> {
    let specs = vec![
        FeatureSpec::numeric("age", 17.0, 90.0).unwrap(),
        FeatureSpec::numeric("hours", 1.0, 99.0).unwrap(),
        FeatureSpec::categorical("sector", ["private", "public", "self"]).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("age,hours,sector,y\n");
    for _ in 0..2000 {
        let age: f64 = rng.random_range(17.0..90.0);
        let hours: f64 = rng.random_range(1.0..99.0);
        let s = rng.random_range(0..3usize);
        let signal = (age - 45.0) / 20.0 - ((age - 45.0) / 20.0).powi(2) + (hours - 40.0) / 30.0 + [0.0, 0.3, -0.4][s];
        let y = match task {
            Task::Regression => (signal + rng.random_range(-0.2..0.2)).clamp(-3.0, 3.0),
            Task::BinaryClassification => f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-2.0 * signal).exp()))),
        };
        writeln!(csv, "{age:.3},{hours:.3},{},{y}", ["private", "public", "self"][s]).unwrap();
    }
    let d = Dataset::read_csv(csv.as_bytes(), &specs, "y").unwrap();
    match task {
        Task::Regression => dpebm::dataset::clip_labels(d, -3.0, 3.0).unwrap(),
        Task::BinaryClassification => dpebm::dataset::clip_labels(d, 0.0, 1.0).unwrap(),
    }
}

fn train(task: Task, epsilon: Option<f64>) -> Model {
    let d = synthetic(task, 17);
    let cfg = TrainConfig { epochs: 40, task, seed: 3, ..Default::default() };
    let trainer = Trainer::new(cfg);
    let trainer = match epsilon {
        Some(e) => trainer.private(PrivacyBudget::new(e, 1e-6, 0.1).unwrap(), AccountantKind::Gdp),
        None => trainer,
    };
    trainer.fit(&d).unwrap().model
}

/// Probe rows: bin midpoints, exact edges and out-of-range values.
fn probe_rows(model: &Model) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..6 {
        let row = model
            .terms()
            .iter()
            .map(|t| match (t.bins().edges(), t.bins().feature().vocabulary()) {
                (Some(e), _) => {
                    let v = match i {
                        0 => e[0] - 5.0,
                        1 => e[e.len() - 1] + 5.0,
                        2 => e[e.len() / 2],
                        _ => {
                            let b = (i * 7) % (e.len() - 1);
                            0.5 * (e[b] + e[b + 1])
                        }
                    };
                    v.to_string()
                }
                (None, Some(vocab)) => vocab[i % vocab.len()].clone(),
                (None, None) => unreachable!("every feature has edges or a vocabulary"),
            })
            .collect();
        rows.push(row);
    }
    rows
}

fn parse_row(model: &Model, cells: &[String]) -> Vec<Value<f64>> {
    model.terms().iter().zip(cells).map(|(t, c)| t.bins().feature().parse_value(c).unwrap()).collect()
}

fn expected(model: &Model) -> serde_json::Value {
    let mut monotone = Vec::new();
    for t in model.terms().iter().filter(|t| t.bins().feature().is_numeric()) {
        for dir in [MonotoneDirection::Increasing, MonotoneDirection::Decreasing] {
            let m = enforce_monotone(model, t.name(), dir).unwrap();
            let shape = m.terms()[model.term_index(t.name()).unwrap()].shape().values().to_vec();
            monotone.push(json!({"feature": t.name(), "direction": dir, "shape": shape}));
        }
    }
    let rows: Vec<_> = probe_rows(model)
        .into_iter()
        .map(|cells| {
            let row = parse_row(model, &cells);
            let contributions: Vec<f64> = model.contributions(&row).unwrap().iter().map(|c| c.score).collect();
            json!({
                "values": cells,
                "raw_score": model.raw_score(&row).unwrap(),
                "prediction": model.predict(&row).unwrap(),
                "contributions": contributions,
            })
        })
        .collect();
    json!({"monotone": monotone, "rows": rows})
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let dir = Path::new(&dir);
    let models = dir.join("models");
    fs::create_dir_all(&models).unwrap();
    fs::create_dir_all(dir.join("expected")).unwrap();

    let private = train(Task::BinaryClassification, Some(1.0));
    // Flatten a blip near the top of the age range to its neighbor's level.
    let age = &private.terms()[0];
    let n = age.bins().n_bins();
    let level = age.shape().values()[n - 5];
    let edited = edit(&private, &EditCommand::set("age", n - 4..n - 1, level)).unwrap();
    let edited = enforce_monotone(&edited, "hours", MonotoneDirection::Increasing).unwrap();
    let generated = [
        ("classification_eps1", private),
        ("classification_edited", edited),
        ("regression_eps8", train(Task::Regression, Some(8.0))),
        ("regression_exact", train(Task::Regression, None)),
    ];
    for (name, model) in &generated {
        model.save(models.join(format!("{name}.json"))).unwrap();
    }

    let mut names: Vec<_> = fs::read_dir(&models).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for path in names {
        let model = Model::load(&path).unwrap();
        let out = dir.join("expected").join(path.file_name().unwrap());
        fs::write(&out, serde_json::to_string_pretty(&expected(&model)).unwrap() + "\n").unwrap();
        println!("wrote {}", out.display());
    }
}
