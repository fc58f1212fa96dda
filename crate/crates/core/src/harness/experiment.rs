use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics::{auroc, mean_std, rmse};
use crate::accountant::{AccountantKind, PrivacyBudget};
use crate::dataset::{split_indices, Dataset, FeatureKind, SplitPlan};
use crate::error::{Error, Result};
use crate::model::GamModel;
use crate::rng::derive_seed;
use crate::trainer::{Task, TrainConfig, Trainer};

/// A privacy level in an experiment grid: a finite ε, or no privacy at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    NonPrivate,
    Value(f64),
}

pub const NON_PRIVATE: &str = "non-private";

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::NonPrivate => f.write_str(NON_PRIVATE),
            Epsilon::Value(e) => write!(f, "{e}"),
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Epsilon::NonPrivate => s.serialize_str(NON_PRIVATE),
            Epsilon::Value(e) => s.serialize_f64(*e),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(e) => Ok(Epsilon::Value(e)),
            Repr::Text(t) if t == NON_PRIVATE => Ok(Epsilon::NonPrivate),
            Repr::Text(t) => t
                .parse()
                .map(Epsilon::Value)
                .map_err(|_| serde::de::Error::custom(format!("expected a number or `{NON_PRIVATE}`, got `{t}`"))),
        }
    }
}

fn default_delta() -> f64 {
    1e-6
}
fn default_repeats() -> usize {
    25
}
fn default_accountants() -> Vec<AccountantKind> {
    vec![AccountantKind::Gdp]
}
fn default_bin_fraction() -> f64 {
    0.1
}
fn default_test_fraction() -> f64 {
    0.2
}

/// Repeated-split evaluation over a grid of privacy levels.
///
/// Every cell uses the same `repeats` train/test splits. Training seeds are
/// derived from `(seed, cell, repeat)`, so results do not depend on `workers`.
/// `training.task` and `training.seed` are overridden per job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    /// Registry file; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    pub epsilons: Vec<Epsilon>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_accountants")]
    pub accountants: Vec<AccountantKind>,
    #[serde(default = "default_bin_fraction")]
    pub bin_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub export_shapes: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, epsilons: Vec<Epsilon>) -> Self {
        Self {
            dataset: dataset.into(),
            registry: None,
            epsilons,
            delta: default_delta(),
            repeats: default_repeats(),
            accountants: default_accountants(),
            bin_fraction: default_bin_fraction(),
            test_fraction: default_test_fraction(),
            training: TrainConfig::default(),
            seed: 0,
            workers: None,
            export_shapes: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::invalid("experiment needs at least one epsilon"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be >= 1"));
        }
        if self.epsilons.iter().any(|e| matches!(e, Epsilon::Value(_))) {
            if self.accountants.is_empty() {
                return Err(Error::invalid("private cells need at least one accountant"));
            }
            for e in &self.epsilons {
                if let Epsilon::Value(v) = e {
                    PrivacyBudget::new(*v, self.delta, self.bin_fraction)?;
                }
            }
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be >= 1"));
        }
        self.training.validate()
    }

    /// Cells in report order: each ε in turn, expanded over accountants.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &epsilon in &self.epsilons {
            match epsilon {
                Epsilon::NonPrivate => cells.push(Cell {
                    epsilon,
                    accountant: None,
                }),
                Epsilon::Value(_) => cells.extend(self.accountants.iter().map(|&k| Cell {
                    epsilon,
                    accountant: Some(k),
                })),
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub epsilon: Epsilon,
    pub accountant: Option<AccountantKind>,
}

impl Cell {
    fn label(&self) -> String {
        match self.accountant {
            None => self.epsilon.to_string(),
            Some(k) => format!("eps{}-{k}", self.epsilon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Auroc,
    Rmse,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Auroc => "auroc",
            MetricKind::Rmse => "rmse",
        })
    }
}

impl MetricKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => MetricKind::Rmse,
            Task::BinaryClassification => MetricKind::Auroc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub epsilon: Epsilon,
    pub accountant: Option<AccountantKind>,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub dataset: String,
    pub metric: MetricKind,
    pub delta: f64,
    pub repeats: usize,
    pub cells: Vec<CellReport>,
}

impl MetricReport {
    pub fn cell(&self, epsilon: Epsilon, accountant: Option<AccountantKind>) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.accountant == accountant)
    }

    /// Long-format CSV: `dataset,epsilon,accountant,repeat,metric,value`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "epsilon", "accountant", "repeat", "metric", "value"])?;
        for cell in &self.cells {
            let accountant = cell.accountant.map_or_else(|| "none".to_string(), |k| k.to_string());
            for (r, v) in cell.values.iter().enumerate() {
                w.write_record([
                    self.dataset.clone(),
                    cell.epsilon.to_string(),
                    accountant.clone(),
                    r.to_string(),
                    self.metric.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// One feature's bins and shape values, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeExport {
    pub feature: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    pub counts: Vec<f64>,
    pub shape: Vec<f64>,
}

pub fn shape_exports(model: &GamModel<f64>) -> Vec<ShapeExport> {
    model
        .terms()
        .iter()
        .map(|t| {
            let (edges, vocabulary) = match &t.bins().feature().kind {
                FeatureKind::Numeric { .. } => (t.bins().edges().map(<[f64]>::to_vec), None),
                FeatureKind::Categorical { vocabulary } => (None, Some(vocabulary.clone())),
            };
            ShapeExport {
                feature: t.name().to_string(),
                edges,
                vocabulary,
                counts: t.bins().counts().to_vec(),
                shape: t.shape().values().to_vec(),
            }
        })
        .collect()
}

/// Shapes of the model trained in one (cell, repeat) job.
#[derive(Debug, Clone, PartialEq)]
pub struct RunShapes {
    pub run: String,
    pub shapes: Vec<ShapeExport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: MetricReport,
    pub shapes: Vec<RunShapes>,
}

pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset<f64>, task: Task) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let plan = SplitPlan {
        seed: cfg.seed,
        test_fraction: cfg.test_fraction,
        n_repeats: cfg.repeats,
    };
    let splits = split_indices(data.n_rows(), &plan)?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.repeats).map(move |r| (c, r)))
        .collect();
    let metric = MetricKind::for_task(task);

    let run_job = |&(c, r): &(usize, usize)| -> Result<(f64, Option<RunShapes>)> {
        let cell = cells[c];
        let train = data.subset(&splits[r].train);
        let test = data.subset(&splits[r].test);
        let training = TrainConfig {
            task,
            seed: derive_seed(derive_seed(cfg.seed, 1 + c as u64), r as u64),
            ..cfg.training
        };
        let mut trainer = Trainer::new(training);
        if let (Epsilon::Value(epsilon), Some(kind)) = (cell.epsilon, cell.accountant) {
            trainer = trainer.private(PrivacyBudget::new(epsilon, cfg.delta, cfg.bin_fraction)?, kind);
        }
        let model = trainer.fit(&train)?.model;
        let predictions = model.predict_dataset(&test)?;
        let labels = test.labels();
        let value = match metric {
            MetricKind::Auroc => auroc(&predictions, labels)?,
            MetricKind::Rmse => rmse(&predictions, labels)?,
        };
        let shapes = cfg.export_shapes.then(|| RunShapes {
            run: format!("{}_r{r:02}", cell.label()),
            shapes: shape_exports(&model),
        });
        Ok((value, shapes))
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(f64, Option<RunShapes>)> =
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<Vec<_>>>())?;

    let mut shapes = Vec::new();
    let mut cell_reports = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let chunk = &results[c * cfg.repeats..(c + 1) * cfg.repeats];
        let values: Vec<f64> = chunk.iter().map(|(v, _)| *v).collect();
        shapes.extend(chunk.iter().filter_map(|(_, s)| s.clone()));
        let (mean, std) = mean_std(&values);
        cell_reports.push(CellReport {
            epsilon: cell.epsilon,
            accountant: cell.accountant,
            mean,
            std,
            values,
        });
    }
    Ok(ExperimentOutput {
        report: MetricReport {
            dataset: cfg.dataset.clone(),
            metric,
            delta: cfg.delta,
            repeats: cfg.repeats,
            cells: cell_reports,
        },
        shapes,
    })
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `shapes/<feature>.json` under `dir`, one file per feature.
pub fn write_shapes(shapes: &[ShapeExport], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(shapes.len());
    for s in shapes {
        let path = dir.join(format!("{}.json", file_stem(&s.feature)));
        write_file(&path, &(serde_json::to_string_pretty(s)? + "\n"))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `report.csv`, `report.json` and, if present, `shapes/<run>/<feature>.json`.
pub fn write_report(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("report.csv"), &out.report.to_csv()?)?;
    write_file(
        &dir.join("report.json"),
        &(serde_json::to_string_pretty(&out.report)? + "\n"),
    )?;
    for run in &out.shapes {
        write_shapes(&run.shapes, &dir.join("shapes").join(file_stem(&run.run)))?;
    }
    Ok(())
}
