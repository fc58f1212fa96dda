//! Additive models: bins plus one shape function per feature, prediction, and
//! the JSON model file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accountant::AccountantKind;
use crate::binning::{BinIndex, FeatureBins};
use crate::dataset::{Dataset, FeatureKind, FeatureSpec, Value};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Scores are predictions (regression).
    Identity,
    /// Scores are logits (binary classification).
    Logistic,
}

impl Link {
    pub fn apply<F: Scalar>(self, raw: F) -> F {
        match self {
            Link::Identity => raw,
            Link::Logistic => F::one() / (F::one() + (-raw).exp()),
        }
    }
}

/// One score per bin of the matching [`FeatureBins`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFunction<F> {
    values: Vec<F>,
}

impl<F: Scalar> ShapeFunction<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("shape function needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("shape values must be finite"));
        }
        Ok(Self { values })
    }

    pub fn zeros(n_bins: usize) -> Self {
        Self {
            values: vec![F::zero(); n_bins],
        }
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, bin: BinIndex) -> F {
        self.values[bin.get()]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTerm<F> {
    bins: FeatureBins<F>,
    shape: ShapeFunction<F>,
}

impl<F: Scalar> FeatureTerm<F> {
    pub fn new(bins: FeatureBins<F>, shape: ShapeFunction<F>) -> Result<Self> {
        if bins.n_bins() != shape.len() {
            return Err(Error::Schema(format!(
                "`{}`: {} shape values for {} bins",
                bins.feature().name,
                shape.len(),
                bins.n_bins()
            )));
        }
        Ok(Self { bins, shape })
    }

    pub fn name(&self) -> &str {
        &self.bins.feature().name
    }

    pub fn bins(&self) -> &FeatureBins<F> {
        &self.bins
    }

    pub fn shape(&self) -> &ShapeFunction<F> {
        &self.shape
    }

    pub(crate) fn shape_mut(&mut self) -> &mut ShapeFunction<F> {
        &mut self.shape
    }
}

/// Score contributed by one feature to one prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution<F> {
    pub feature: String,
    pub bin: usize,
    pub score: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyMeta {
    pub epsilon: f64,
    pub delta: f64,
    pub accountant: AccountantKind,
    pub sigma_train: f64,
    pub sigma_bin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub seed: u64,
    /// Set when noise was overridden for testing; such models carry no privacy claim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_sigma: Option<f64>,
}

/// One post-training change to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub operation: String,
    pub feature: String,
    pub parameters: serde_json::Value,
    pub timestamp: String,
}

impl EditRecord {
    pub fn now(operation: impl Into<String>, feature: impl Into<String>, parameters: serde_json::Value) -> Self {
        Self {
            operation: operation.into(),
            feature: feature.into(),
            parameters,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

/// `g(E[y]) = β + Σ_k f_k(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GamModel<F> {
    link: Link,
    intercept: F,
    label_range: f64,
    privacy: Option<PrivacyMeta>,
    training: Option<TrainingMeta>,
    terms: Vec<FeatureTerm<F>>,
    edit_log: Vec<EditRecord>,
}

impl<F: Scalar> GamModel<F> {
    pub fn new(link: Link, intercept: F, label_range: f64, terms: Vec<FeatureTerm<F>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Schema("model has no features".into()));
        }
        if !intercept.is_finite() {
            return Err(Error::Schema("intercept must be finite".into()));
        }
        if !(label_range.is_finite() && label_range >= 0.0) {
            return Err(Error::Schema("label_range must be finite and >= 0".into()));
        }
        let mut names: Vec<&str> = terms.iter().map(|t| t.name()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate feature `{}`", w[0])));
        }
        Ok(Self {
            link,
            intercept,
            label_range,
            privacy: None,
            training: None,
            terms,
            edit_log: Vec::new(),
        })
    }

    pub fn with_privacy(mut self, privacy: Option<PrivacyMeta>) -> Self {
        self.privacy = privacy;
        self
    }

    pub fn with_training(mut self, training: Option<TrainingMeta>) -> Self {
        self.training = training;
        self
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn intercept(&self) -> F {
        self.intercept
    }

    pub fn label_range(&self) -> f64 {
        self.label_range
    }

    pub fn privacy(&self) -> Option<&PrivacyMeta> {
        self.privacy.as_ref()
    }

    pub fn training(&self) -> Option<&TrainingMeta> {
        self.training.as_ref()
    }

    pub fn terms(&self) -> &[FeatureTerm<F>] {
        &self.terms
    }

    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn feature_specs(&self) -> Vec<FeatureSpec<F>> {
        self.terms.iter().map(|t| t.bins.feature().clone()).collect()
    }

    pub fn term_index(&self, name: &str) -> Result<usize> {
        self.terms
            .iter()
            .position(|t| t.name() == name)
            .ok_or_else(|| Error::invalid(format!("model has no feature `{name}`")))
    }

    pub fn edit_log(&self) -> &[EditRecord] {
        &self.edit_log
    }

    pub(crate) fn term_mut(&mut self, k: usize) -> &mut FeatureTerm<F> {
        &mut self.terms[k]
    }

    pub(crate) fn push_edit(&mut self, record: EditRecord) {
        self.edit_log.push(record);
    }

    fn check_row(&self, row: &[Value<F>]) -> Result<()> {
        if row.len() != self.terms.len() {
            return Err(Error::invalid(format!(
                "row has {} values, model has {} features",
                row.len(),
                self.terms.len()
            )));
        }
        Ok(())
    }

    /// `β + Σ_k f_k(bin_k(x_k))`, summed left to right in feature order.
    pub fn raw_score(&self, row: &[Value<F>]) -> Result<F> {
        self.check_row(row)?;
        let mut score = self.intercept;
        for (term, x) in self.terms.iter().zip(row) {
            score = score + term.shape.at(term.bins.lookup(x)?);
        }
        Ok(score)
    }

    pub fn predict(&self, row: &[Value<F>]) -> Result<F> {
        Ok(self.link.apply(self.raw_score(row)?))
    }

    /// Per-feature scores for `row`; adding them to the intercept in order
    /// reproduces [`raw_score`](Self::raw_score) exactly.
    pub fn contributions(&self, row: &[Value<F>]) -> Result<Vec<Contribution<F>>> {
        self.check_row(row)?;
        self.terms
            .iter()
            .zip(row)
            .map(|(term, x)| {
                let bin = term.bins.lookup(x)?;
                Ok(Contribution {
                    feature: term.name().to_string(),
                    bin: bin.get(),
                    score: term.shape.at(bin),
                })
            })
            .collect()
    }

    /// Raw scores for every row of `data`, whose features must match the
    /// model's by name and order.
    pub fn raw_scores(&self, data: &Dataset<F>) -> Result<Vec<F>> {
        self.check_features(data.features())?;
        let mut scores = vec![self.intercept; data.n_rows()];
        for (k, term) in self.terms.iter().enumerate() {
            let column = data.column(k);
            for (i, s) in scores.iter_mut().enumerate() {
                *s = *s + term.shape.at(term.bins.lookup(&column.get(i))?);
            }
        }
        Ok(scores)
    }

    pub fn predict_dataset(&self, data: &Dataset<F>) -> Result<Vec<F>> {
        Ok(self
            .raw_scores(data)?
            .into_iter()
            .map(|s| self.link.apply(s))
            .collect())
    }

    pub fn check_features(&self, specs: &[FeatureSpec<F>]) -> Result<()> {
        if specs.len() != self.terms.len() {
            return Err(Error::Schema(format!(
                "data has {} features, model has {}",
                specs.len(),
                self.terms.len()
            )));
        }
        for (spec, term) in specs.iter().zip(&self.terms) {
            if spec != term.bins.feature() {
                return Err(Error::Schema(format!(
                    "feature `{}` in data does not match model feature `{}`",
                    spec.name,
                    term.name()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::ModelFormat("missing or invalid schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let file: ModelFile<F> = serde_json::from_value(value)?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar", deny_unknown_fields)]
struct ModelFile<F> {
    schema_version: u64,
    link: Link,
    intercept: F,
    label_range: f64,
    #[serde(default)]
    privacy: Option<PrivacyMeta>,
    #[serde(default)]
    training: Option<TrainingMeta>,
    features: Vec<FeatureRecord<F>>,
    #[serde(default)]
    edit_log: Vec<EditRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar", deny_unknown_fields)]
struct FeatureRecord<F> {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
    counts: Vec<F>,
    shape: Vec<F>,
    is_private: bool,
    #[serde(default)]
    noise_scale: F,
}

impl<F: Scalar> ModelFile<F> {
    fn from_model(m: &GamModel<F>) -> Self {
        let features = m
            .terms
            .iter()
            .map(|t| {
                let spec = t.bins.feature();
                let (kind, edges, vocabulary) = match &spec.kind {
                    FeatureKind::Numeric { .. } => ("numeric", t.bins.edges().map(<[F]>::to_vec), None),
                    FeatureKind::Categorical { vocabulary } => ("categorical", None, Some(vocabulary.clone())),
                };
                FeatureRecord {
                    name: spec.name.clone(),
                    kind: kind.to_string(),
                    edges,
                    vocabulary,
                    counts: t.bins.counts().to_vec(),
                    shape: t.shape.values().to_vec(),
                    is_private: t.bins.is_private(),
                    noise_scale: t.bins.noise_scale(),
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            link: m.link,
            intercept: m.intercept,
            label_range: m.label_range,
            privacy: m.privacy,
            training: m.training,
            features,
            edit_log: m.edit_log.clone(),
        }
    }

    fn into_model(self) -> Result<GamModel<F>> {
        let mut terms = Vec::with_capacity(self.features.len());
        for r in self.features {
            let (spec, edges) = match (r.kind.as_str(), r.edges, r.vocabulary) {
                ("numeric", Some(edges), None) => {
                    if edges.len() < 2 {
                        return Err(Error::ModelFormat(format!("`{}`: need at least two edges", r.name)));
                    }
                    let spec = FeatureSpec::numeric(&r.name, edges[0], edges[edges.len() - 1])
                        .map_err(|e| Error::ModelFormat(e.to_string()))?;
                    (spec, edges)
                }
                ("categorical", None, Some(vocabulary)) => {
                    let spec = FeatureSpec::categorical(&r.name, vocabulary)
                        .map_err(|e| Error::ModelFormat(e.to_string()))?;
                    (spec, Vec::new())
                }
                (kind, ..) => {
                    return Err(Error::ModelFormat(format!(
                        "`{}`: kind `{kind}` needs exactly `edges` (numeric) or `vocabulary` (categorical)",
                        r.name
                    )))
                }
            };
            let bins = FeatureBins::from_parts(spec, edges, r.counts, r.is_private, r.noise_scale)
                .map_err(|e| Error::ModelFormat(e.to_string()))?;
            let shape = ShapeFunction::new(r.shape).map_err(|e| Error::ModelFormat(format!("`{}`: {e}", r.name)))?;
            terms.push(FeatureTerm::new(bins, shape)?);
        }
        let mut model = GamModel::new(self.link, self.intercept, self.label_range, terms)?
            .with_privacy(self.privacy)
            .with_training(self.training);
        model.edit_log = self.edit_log;
        Ok(model)
    }
}
