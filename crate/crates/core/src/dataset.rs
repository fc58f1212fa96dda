//! Tabular data under the public-knowledge contract.
//!
//! Feature ranges, category vocabularies and label bounds are operator-supplied
//! public inputs. Nothing here infers them from the data, since doing so would
//! leak information about individual rows.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::trainer::Task;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind<F> {
    Numeric { min: F, max: F },
    Categorical { vocabulary: Vec<String> },
}

/// Public description of one input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "FeatureSpecRecord<F>",
    into = "FeatureSpecRecord<F>",
    bound = "F: Scalar"
)]
pub struct FeatureSpec<F> {
    pub name: String,
    pub kind: FeatureKind<F>,
}

impl<F: Scalar> FeatureSpec<F> {
    pub fn numeric(name: impl Into<String>, min: F, max: F) -> Result<Self> {
        let name = name.into();
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::Schema(format!(
                "feature `{name}`: numeric range requires finite min < max (got {min}, {max})"
            )));
        }
        Ok(Self {
            name,
            kind: FeatureKind::Numeric { min, max },
        })
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        vocabulary: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let name = name.into();
        let vocabulary: Vec<String> = vocabulary.into_iter().map(Into::into).collect();
        if vocabulary.is_empty() {
            return Err(Error::Schema(format!("feature `{name}`: empty vocabulary")));
        }
        let mut sorted: Vec<&String> = vocabulary.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!(
                "feature `{name}`: duplicate category `{}`",
                w[0]
            )));
        }
        Ok(Self {
            name,
            kind: FeatureKind::Categorical { vocabulary },
        })
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric { .. })
    }

    /// `(min, max)` for numeric features.
    pub fn range(&self) -> Option<(F, F)> {
        match self.kind {
            FeatureKind::Numeric { min, max } => Some((min, max)),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn vocabulary(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { vocabulary } => Some(vocabulary),
            FeatureKind::Numeric { .. } => None,
        }
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.vocabulary()?.iter().position(|c| c == label)
    }

    /// Parses one CSV cell according to this feature's kind.
    pub fn parse_value(&self, cell: &str) -> Result<Value<F>> {
        let cell = cell.trim();
        match &self.kind {
            FeatureKind::Numeric { .. } => {
                if cell.is_empty() {
                    return Err(Error::invalid(format!("missing value for `{}`", self.name)));
                }
                let x: F = cell
                    .parse()
                    .map_err(|_| Error::invalid(format!("`{cell}` is not a number")))?;
                if !x.is_finite() {
                    return Err(Error::invalid(format!("`{cell}` is not finite")));
                }
                Ok(Value::Number(x))
            }
            FeatureKind::Categorical { .. } => self
                .category_index(cell)
                .map(Value::Category)
                .ok_or_else(|| Error::UnknownCategory {
                    feature: self.name.clone(),
                    value: cell.to_string(),
                }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct FeatureSpecRecord<F> {
    name: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
}

impl<F: Scalar> TryFrom<FeatureSpecRecord<F>> for FeatureSpec<F> {
    type Error = Error;

    fn try_from(r: FeatureSpecRecord<F>) -> Result<Self> {
        match r.kind {
            KindTag::Numeric => match (r.min, r.max) {
                (Some(min), Some(max)) => FeatureSpec::numeric(r.name, min, max),
                _ => Err(Error::Schema(format!(
                    "numeric feature `{}` needs min and max",
                    r.name
                ))),
            },
            KindTag::Categorical => match r.vocabulary {
                Some(v) => FeatureSpec::categorical(r.name, v),
                None => Err(Error::Schema(format!(
                    "categorical feature `{}` needs a vocabulary",
                    r.name
                ))),
            },
        }
    }
}

impl<F: Scalar> From<FeatureSpec<F>> for FeatureSpecRecord<F> {
    fn from(s: FeatureSpec<F>) -> Self {
        match s.kind {
            FeatureKind::Numeric { min, max } => Self {
                name: s.name,
                kind: KindTag::Numeric,
                min: Some(min),
                max: Some(max),
                vocabulary: None,
            },
            FeatureKind::Categorical { vocabulary } => Self {
                name: s.name,
                kind: KindTag::Categorical,
                min: None,
                max: None,
                vocabulary: Some(vocabulary),
            },
        }
    }
}

/// A single feature value: a number, or an index into the feature's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<F> {
    Number(F),
    Category(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column<F> {
    Numeric(Vec<F>),
    Categorical(Vec<u32>),
}

impl<F: Scalar> Column<F> {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value<F> {
        match self {
            Column::Numeric(v) => Value::Number(v[row]),
            Column::Categorical(v) => Value::Category(v[row] as usize),
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Label column name and its public bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LabelSpec<F> {
    pub column: String,
    pub min: F,
    pub max: F,
}

/// Schema file: feature specs plus, optionally, the label column and task.
///
/// Accepts either a bare JSON array of feature specs or an object
/// `{"features": [...], "label": {...}, "task": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct Schema<F> {
    pub features: Vec<FeatureSpec<F>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelSpec<F>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound = "F: Scalar")]
struct FullSchema<F> {
    features: Vec<FeatureSpec<F>>,
    #[serde(default)]
    label: Option<LabelSpec<F>>,
    #[serde(default)]
    task: Option<Task>,
}

/// Accepts either a bare feature list or `{features, label?, task?}`.
impl<'de, F: Scalar> Deserialize<'de> for Schema<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(d)?;
        if value.is_array() {
            let features = serde_json::from_value(value).map_err(D::Error::custom)?;
            return Ok(Schema { features, label: None, task: None });
        }
        let full: FullSchema<F> = serde_json::from_value(value).map_err(D::Error::custom)?;
        Ok(Schema { features: full.features, label: full.label, task: full.task })
    }
}

impl<F: Scalar> Schema<F> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Self = serde_json::from_str(&text)?;
        if schema.features.is_empty() {
            return Err(Error::Schema("no features".into()));
        }
        Ok(schema)
    }
}

/// Read counters used to audit which code paths touch the data.
#[derive(Debug, Default)]
struct AccessCounter {
    labels: AtomicU64,
    features: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccessCounts {
    pub label_reads: u64,
    pub feature_reads: u64,
}

#[derive(Debug)]
pub struct Dataset<F> {
    features: Vec<FeatureSpec<F>>,
    columns: Vec<Column<F>>,
    labels: Vec<F>,
    label_name: String,
    label_bounds: Option<(F, F)>,
    access: AccessCounter,
}

impl<F: Clone> Clone for Dataset<F> {
    /// Clones start with fresh access counters.
    fn clone(&self) -> Self {
        Self {
            features: self.features.clone(),
            columns: self.columns.clone(),
            labels: self.labels.clone(),
            label_name: self.label_name.clone(),
            label_bounds: self.label_bounds.clone(),
            access: AccessCounter::default(),
        }
    }
}

impl<F: Scalar> Dataset<F> {
    pub fn new(
        features: Vec<FeatureSpec<F>>,
        columns: Vec<Column<F>>,
        labels: Vec<F>,
        label_name: impl Into<String>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Empty("dataset has no features".into()));
        }
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if features.len() != columns.len() {
            return Err(Error::invalid("feature/column count mismatch"));
        }
        for (spec, col) in features.iter().zip(&columns) {
            if col.len() != labels.len() {
                return Err(Error::invalid(format!("column `{}` has wrong length", spec.name)));
            }
            match (&spec.kind, col) {
                (FeatureKind::Numeric { .. }, Column::Numeric(v)) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::invalid(format!("non-finite value in `{}`", spec.name)));
                    }
                }
                (FeatureKind::Categorical { vocabulary }, Column::Categorical(v)) => {
                    if v.iter().any(|&c| c as usize >= vocabulary.len()) {
                        return Err(Error::invalid(format!(
                            "category index out of range in `{}`",
                            spec.name
                        )));
                    }
                }
                _ => return Err(Error::invalid(format!("column kind mismatch for `{}`", spec.name))),
            }
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("non-finite label"));
        }
        Ok(Self {
            features,
            columns,
            labels,
            label_name: label_name.into(),
            label_bounds: None,
            access: AccessCounter::default(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureSpec<F>] {
        &self.features
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Public label bounds, set by [`clip_labels`].
    pub fn label_bounds(&self) -> Option<(F, F)> {
        self.label_bounds
    }

    /// Label range `R = y_max - y_min`, once labels have been clipped.
    pub fn label_range(&self) -> Option<F> {
        self.label_bounds.map(|(lo, hi)| hi - lo)
    }

    /// Label column. Every call is counted.
    pub fn labels(&self) -> &[F] {
        self.access.labels.fetch_add(1, Ordering::Relaxed);
        &self.labels
    }

    /// Feature column `k`. Every call is counted.
    pub fn column(&self, k: usize) -> &Column<F> {
        self.access.features.fetch_add(1, Ordering::Relaxed);
        &self.columns[k]
    }

    pub fn row(&self, i: usize) -> Vec<Value<F>> {
        self.access.features.fetch_add(1, Ordering::Relaxed);
        self.columns.iter().map(|c| c.get(i)).collect()
    }

    pub fn access_counts(&self) -> AccessCounts {
        AccessCounts {
            label_reads: self.access.labels.load(Ordering::Relaxed),
            feature_reads: self.access.features.load(Ordering::Relaxed),
        }
    }

    pub fn reset_access_counts(&self) {
        self.access.labels.store(0, Ordering::Relaxed);
        self.access.features.store(0, Ordering::Relaxed);
    }

    /// Rows at `indices`, in the given order. Label bounds carry over.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.clone(),
            columns: self.columns.iter().map(|c| c.select(indices)).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_name: self.label_name.clone(),
            label_bounds: self.label_bounds,
            access: AccessCounter::default(),
        }
    }

    pub fn read_csv<R: Read>(reader: R, specs: &[FeatureSpec<F>], label_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::Empty("no header row".into()));
        }
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let feature_idx = specs.iter().map(|s| find(&s.name)).collect::<Result<Vec<_>>>()?;
        let label_idx = find(label_column)?;

        let mut columns: Vec<Column<F>> = specs
            .iter()
            .map(|s| match s.kind {
                FeatureKind::Numeric { .. } => Column::Numeric(Vec::new()),
                FeatureKind::Categorical { .. } => Column::Categorical(Vec::new()),
            })
            .collect();
        let mut labels = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let bad = |column: &str, message: String| Error::BadValue {
                row: row + 1,
                column: column.to_string(),
                message,
            };
            for ((spec, &j), col) in specs.iter().zip(&feature_idx).zip(columns.iter_mut()) {
                let cell = record.get(j).unwrap_or("");
                let value = spec.parse_value(cell).map_err(|e| match e {
                    Error::UnknownCategory { .. } => e,
                    other => bad(&spec.name, other.to_string()),
                })?;
                match (col, value) {
                    (Column::Numeric(v), Value::Number(x)) => v.push(x),
                    (Column::Categorical(v), Value::Category(c)) => v.push(c as u32),
                    _ => unreachable!("parse_value follows the feature kind"),
                }
            }
            let cell = record.get(label_idx).unwrap_or("").trim();
            let y: F = cell
                .parse()
                .map_err(|_| bad(label_column, format!("label `{cell}` is not numeric")))?;
            if !y.is_finite() {
                return Err(bad(label_column, format!("label `{cell}` is not finite")));
            }
            labels.push(y);
        }
        if labels.is_empty() {
            return Err(Error::Empty("no data rows".into()));
        }
        Dataset::new(specs.to_vec(), columns, labels, label_column)
    }

    /// Writes features then label, with the original column names. Numbers use
    /// the shortest representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        header.push(&self.label_name);
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut record: Vec<String> = Vec::with_capacity(self.n_features() + 1);
            for (spec, col) in self.features.iter().zip(&self.columns) {
                record.push(match col.get(i) {
                    Value::Number(x) => x.to_string(),
                    Value::Category(c) => spec.vocabulary().expect("categorical")[c].clone(),
                });
            }
            record.push(self.labels[i].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub fn load_csv<F: Scalar>(
    path: impl AsRef<Path>,
    specs: &[FeatureSpec<F>],
    label_column: &str,
) -> Result<Dataset<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::read_csv(file, specs, label_column)
}

/// Clamps every label into `[y_min, y_max]` and records the bounds.
pub fn clip_labels<F: Scalar>(mut d: Dataset<F>, y_min: F, y_max: F) -> Result<Dataset<F>> {
    if !(y_min.is_finite() && y_max.is_finite() && y_min < y_max) {
        return Err(Error::invalid(format!("label bounds need y_min < y_max (got {y_min}, {y_max})")));
    }
    for y in d.labels.iter_mut() {
        *y = y.max(y_min).min(y_max);
    }
    d.label_bounds = Some((y_min, y_max));
    Ok(d)
}

/// Repeated random train/test partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test_fraction: f64,
    pub n_repeats: usize,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        if self.n_repeats == 0 {
            return Err(Error::invalid("n_repeats must be positive"));
        }
        Ok(())
    }

    /// Test-set size: `N * test_fraction` rounded half up.
    pub fn test_size(&self, n: usize) -> usize {
        (n as f64 * self.test_fraction + 0.5).floor() as usize
    }
}

/// Sorted train and test row indices for one repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, plan: &SplitPlan) -> Result<Vec<SplitIndices>> {
    plan.validate()?;
    let n_test = plan.test_size(n);
    if n_test == 0 || n_test >= n {
        return Err(Error::invalid(format!(
            "{n} rows cannot be split into non-empty parts with test fraction {}",
            plan.test_fraction
        )));
    }
    Ok((0..plan.n_repeats)
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(plan.seed, r as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut test = perm[..n_test].to_vec();
            let mut train = perm[n_test..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            SplitIndices { train, test }
        })
        .collect())
}

pub fn make_splits<F: Scalar>(d: &Dataset<F>, plan: &SplitPlan) -> Result<Vec<(Dataset<F>, Dataset<F>)>> {
    Ok(split_indices(d.n_rows(), plan)?
        .into_iter()
        .map(|s| (d.subset(&s.train), d.subset(&s.test)))
        .collect())
}
