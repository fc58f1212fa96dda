//! Cyclic gradient boosting over binned features.
//!
//! Each epoch visits the features in order. For feature `k` a random partition
//! of its bins into at most `max_leaves` contiguous groups is drawn without
//! looking at the data, the residuals are summed per group, optionally noised,
//! divided by the (noisy) group count, and the resulting increment is added to
//! every bin of the group. Residuals are then recomputed from scratch against
//! the whole model.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accountant::{
    allocate_budget, calibrate_binning_sigma, calibrate_training_sigma, AccountantKind, BudgetLedger, LedgerCheck,
    PrivacyBudget,
};
use crate::binning::{dp_categorical_bins, dp_quantile_bins, FeatureBins};
use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::model::{FeatureTerm, GamModel, Link, PrivacyMeta, ShapeFunction, TrainingMeta};
use crate::rng::{substream, Purpose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Regression,
    BinaryClassification,
}

impl Task {
    pub fn link(self) -> Link {
        match self {
            Task::Regression => Link::Identity,
            Task::BinaryClassification => Link::Logistic,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::BinaryClassification => "binary_classification",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "regression" => Ok(Task::Regression),
            "binary_classification" | "classification" => Ok(Task::BinaryClassification),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub task: Task,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.01,
            max_leaves: 3,
            max_bins: 32,
            task: Task::Regression,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and > 0"));
        }
        if self.max_leaves == 0 {
            return Err(Error::invalid("max_leaves must be >= 1"));
        }
        if self.max_bins == 0 || 2 * self.max_bins > u16::MAX as usize {
            return Err(Error::invalid(format!("max_bins must lie in [1, {}]", u16::MAX / 2)));
        }
        Ok(())
    }
}

/// Contiguous groups of bin indices covering `0..n_bins`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPartition {
    groups: Vec<Range<usize>>,
}

impl SplitPartition {
    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn n_bins(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }
}

/// Draws `min(max_leaves, n_bins) - 1` distinct cut positions uniformly from
/// the `n_bins - 1` interior boundaries.
pub fn random_partition<R: Rng + ?Sized>(n_bins: usize, max_leaves: usize, rng: &mut R) -> SplitPartition {
    assert!(n_bins >= 1, "a partition needs at least one bin");
    let n_groups = max_leaves.clamp(1, n_bins);
    let mut cuts: Vec<usize> = sample(rng, n_bins - 1, n_groups - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut groups = Vec::with_capacity(n_groups);
    let mut start = 0;
    for c in cuts {
        groups.push(start..c);
        start = c;
    }
    groups.push(start..n_bins);
    SplitPartition { groups }
}

/// Per-group increments `(η·T + σ·η·R·z) / max(count, min_count)` with
/// `z ~ N(0, 1)` drawn from `noise` once per group. Without a noise source the
/// `z` term is omitted entirely.
pub fn leaf_update<F: Scalar, R: Rng + ?Sized>(
    sums: &[F],
    counts: &[F],
    min_count: F,
    learning_rate: F,
    label_range: F,
    sigma: F,
    noise: Option<&mut R>,
) -> Vec<F> {
    assert_eq!(sums.len(), counts.len(), "one count per group");
    let noise_sd = sigma * learning_rate * label_range;
    let mut noisy: Vec<F> = sums.iter().map(|&t| learning_rate * t).collect();
    if let Some(rng) = noise {
        for t in noisy.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *t = *t + noise_sd * F::of(z);
        }
    }
    noisy
        .into_iter()
        .zip(counts)
        .map(|(t, &c)| t / c.max(min_count))
        .collect()
}

/// Smallest count a leaf may divide by. Exact counts only need guarding against
/// empty groups. Noisy counts can sit far below the true count (or below zero),
/// which turns a step of `η` into a step of `η·n`; for those the floor is the
/// public per-bin target `N / max_bins`.
pub fn count_floor<F: Scalar>(bins: &FeatureBins<F>, n_rows: usize, max_bins: usize) -> F {
    if bins.is_private() {
        (F::from_count(n_rows) / F::from_count(max_bins)).max(F::one())
    } else {
        F::one()
    }
}

/// Residual of one row given its label and current score.
#[inline]
pub fn residual<F: Scalar>(task: Task, y: F, score: F) -> F {
    match task {
        Task::Regression => y - score,
        Task::BinaryClassification => y + F::one() / (F::one() + score.exp()) - F::one(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualState<F> {
    pub residuals: Vec<F>,
    /// Number of completed feature iterations.
    pub iteration: usize,
}

/// Recomputes every residual from the labels and the current scores.
pub fn update_residuals<F: Scalar>(state: &mut ResidualState<F>, labels: &[F], scores: &[F], task: Task) {
    assert_eq!(labels.len(), scores.len());
    state.residuals.clear();
    state
        .residuals
        .extend(labels.iter().zip(scores).map(|(&y, &s)| residual(task, y, s)));
    state.iteration += 1;
}

/// Bin index of every row for every feature, one column per feature.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    codes: Vec<Vec<u16>>,
}

impl BinnedMatrix {
    pub fn new<F: Scalar>(data: &Dataset<F>, bins: &[FeatureBins<F>]) -> Result<Self> {
        let mut codes = Vec::with_capacity(bins.len());
        for (k, b) in bins.iter().enumerate() {
            if b.n_bins() > u16::MAX as usize {
                return Err(Error::invalid(format!("`{}` has too many bins", b.feature().name)));
            }
            let column = data.column(k);
            let mut col = Vec::with_capacity(column.len());
            for i in 0..column.len() {
                col.push(b.lookup(&column.get(i))?.get() as u16);
            }
            codes.push(col);
        }
        Ok(Self { codes })
    }

    pub fn n_rows(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn column(&self, k: usize) -> &[u16] {
        &self.codes[k]
    }

    /// `Σ_k shapes[k][bin_ik]` per row, accumulated in feature order from zero.
    pub fn scores<F: Scalar>(&self, shapes: &[Vec<F>], out: &mut Vec<F>) {
        out.clear();
        out.resize(self.n_rows(), F::zero());
        for (codes, shape) in self.codes.iter().zip(shapes) {
            for (s, &c) in out.iter_mut().zip(codes) {
                *s = *s + shape[c as usize];
            }
        }
    }
}

/// Shape values of one feature right after one of its updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct TraceStep<F> {
    pub epoch: usize,
    pub feature: usize,
    pub name: String,
    pub shape: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<F> {
    pub model: GamModel<F>,
    /// GDP costs of every release, for private runs.
    pub ledger: Option<BudgetLedger>,
    pub ledger_check: Option<LedgerCheck>,
    pub sigma_train: f64,
    pub sigma_bin: f64,
    /// Values that fell outside their feature range while binning.
    pub clamped_values: usize,
    pub trace: Vec<TraceStep<F>>,
}

/// Training entry point. Non-private by default.
#[derive(Debug, Clone)]
pub struct Trainer<F> {
    config: TrainConfig,
    privacy: Option<(PrivacyBudget, AccountantKind)>,
    bins: Option<Vec<FeatureBins<F>>>,
    forced_sigma: Option<f64>,
    trace: bool,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            config,
            privacy: None,
            bins: None,
            forced_sigma: None,
            trace: false,
        }
    }

    pub fn private(mut self, budget: PrivacyBudget, kind: AccountantKind) -> Self {
        self.privacy = Some((budget, kind));
        self
    }

    /// Uses the given bin definitions instead of building them from the data.
    pub fn with_bins(mut self, bins: Vec<FeatureBins<F>>) -> Self {
        self.bins = Some(bins);
        self
    }

    /// Testing hook: runs the noisy code path with the given training σ. The
    /// resulting model carries no privacy metadata.
    pub fn force_sigma(mut self, sigma: f64) -> Self {
        self.forced_sigma = Some(sigma);
        self
    }

    pub fn trace(mut self, enabled: bool) -> Self {
        self.trace = enabled;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn fit(&self, data: &Dataset<F>) -> Result<TrainOutput<F>> {
        let cfg = &self.config;
        cfg.validate()?;
        if let Some(s) = self.forced_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid("forced sigma must be finite and >= 0"));
            }
        }
        let n_features = data.n_features();
        let noisy = self.privacy.is_some() || self.forced_sigma.is_some();

        // One counted read of the labels to check and fix the label range.
        let labels = data.labels();
        let label_range = self.label_range(data, labels)?;
        let r = F::of(label_range);

        let (sigma_bin, sigma_train) = match self.privacy {
            Some((budget, kind)) => {
                let (bin_budget, train_budget) = allocate_budget(&budget);
                let sigma_bin = if self.bins.is_some() {
                    0.0
                } else {
                    if budget.bin_fraction <= 0.0 {
                        return Err(Error::Privacy(
                            "private binning needs a positive bin_fraction (or supply public bins)".into(),
                        ));
                    }
                    calibrate_binning_sigma(bin_budget, n_features, kind)?
                };
                (sigma_bin, calibrate_training_sigma(train_budget, cfg.epochs, n_features, kind)?)
            }
            None => (0.0, 0.0),
        };
        let sigma_train = self.forced_sigma.unwrap_or(sigma_train);

        let (bins, clamped_values) = match &self.bins {
            Some(bins) => {
                check_bins(data, bins)?;
                (bins.clone(), 0)
            }
            None => build_bins(data, cfg, sigma_bin)?,
        };
        let matrix = BinnedMatrix::new(data, &bins)?;

        let mut ledger = self.privacy.map(|_| {
            let mut ledger = BudgetLedger::new();
            if self.bins.is_none() {
                for b in &bins {
                    ledger.record_gaussian(format!("bin/{}", b.feature().name), sigma_bin);
                }
            }
            ledger
        });
        let charge_training = self.forced_sigma.is_none();

        let eta = F::of(cfg.learning_rate);
        let sigma = F::of(sigma_train);
        let mut shapes: Vec<Vec<F>> = bins.iter().map(|b| vec![F::zero(); b.n_bins()]).collect();
        let mut state = ResidualState {
            residuals: labels.iter().map(|&y| residual(cfg.task, y, F::zero())).collect(),
            iteration: 0,
        };
        let mut scores = Vec::with_capacity(matrix.n_rows());
        let mut trace = Vec::new();
        let mut bin_sums: Vec<F> = Vec::new();

        for epoch in 0..cfg.epochs {
            for k in 0..n_features {
                let n_bins = bins[k].n_bins();
                let partition = random_partition(n_bins, cfg.max_leaves, &mut substream(cfg.seed, Purpose::Partition, epoch, k));

                bin_sums.clear();
                bin_sums.resize(n_bins, F::zero());
                for (&c, &r_i) in matrix.column(k).iter().zip(&state.residuals) {
                    bin_sums[c as usize] = bin_sums[c as usize] + r_i;
                }
                let counts = bins[k].counts();
                let (sums, group_counts): (Vec<F>, Vec<F>) = partition
                    .groups()
                    .iter()
                    .map(|g| {
                        let s = bin_sums[g.clone()].iter().fold(F::zero(), |a, &b| a + b);
                        let c = counts[g.clone()].iter().fold(F::zero(), |a, &b| a + b);
                        (s, c)
                    })
                    .unzip();

                let min_count = count_floor(&bins[k], matrix.n_rows(), cfg.max_bins);
                let increments = if noisy {
                    let mut rng = substream(cfg.seed, Purpose::LeafNoise, epoch, k);
                    leaf_update(&sums, &group_counts, min_count, eta, r, sigma, Some(&mut rng))
                } else {
                    leaf_update::<F, rand_chacha::ChaCha20Rng>(&sums, &group_counts, min_count, eta, r, sigma, None)
                };
                for (g, &inc) in partition.groups().iter().zip(&increments) {
                    for v in &mut shapes[k][g.clone()] {
                        *v = *v + inc;
                    }
                }
                if let (Some(ledger), true) = (ledger.as_mut(), charge_training) {
                    ledger.record_gaussian(format!("train/{epoch}/{k}"), sigma_train);
                }
                if self.trace {
                    trace.push(TraceStep {
                        epoch,
                        feature: k,
                        name: bins[k].feature().name.clone(),
                        shape: shapes[k].clone(),
                    });
                }

                matrix.scores(&shapes, &mut scores);
                update_residuals(&mut state, data.labels(), &scores, cfg.task);
            }
        }

        let ledger_check = match (&ledger, self.privacy, charge_training) {
            (Some(ledger), Some((budget, _)), true) => {
                let check = ledger.reconvert(budget.epsilon, budget.delta)?;
                if !check.within(budget.epsilon, budget.delta, 1e-9) {
                    return Err(Error::Invariant(format!(
                        "privacy ledger exceeds budget: spent (epsilon {}, delta {}) against ({}, {})",
                        check.epsilon, check.delta, budget.epsilon, budget.delta
                    )));
                }
                Some(check)
            }
            _ => None,
        };

        let terms = bins
            .into_iter()
            .zip(shapes)
            .map(|(b, s)| FeatureTerm::new(b, ShapeFunction::new(s)?))
            .collect::<Result<Vec<_>>>()?;
        let privacy = match (self.privacy, self.forced_sigma) {
            (Some((budget, kind)), None) => Some(PrivacyMeta {
                epsilon: budget.epsilon,
                delta: budget.delta,
                accountant: kind,
                sigma_train,
                sigma_bin,
            }),
            _ => None,
        };
        let model = GamModel::new(cfg.task.link(), F::zero(), label_range, terms)?
            .with_privacy(privacy)
            .with_training(Some(TrainingMeta {
                epochs: cfg.epochs,
                learning_rate: cfg.learning_rate,
                max_leaves: cfg.max_leaves,
                max_bins: cfg.max_bins,
                seed: cfg.seed,
                forced_sigma: self.forced_sigma,
            }));
        Ok(TrainOutput {
            model,
            ledger: if charge_training { ledger } else { None },
            ledger_check,
            sigma_train,
            sigma_bin,
            clamped_values,
            trace,
        })
    }

    fn label_range(&self, data: &Dataset<F>, labels: &[F]) -> Result<f64> {
        match self.config.task {
            Task::BinaryClassification => {
                if labels.iter().any(|&y| y != F::zero() && y != F::one()) {
                    return Err(Error::invalid("classification labels must be 0 or 1"));
                }
                Ok(1.0)
            }
            Task::Regression => match data.label_bounds() {
                Some((lo, hi)) => {
                    if labels.iter().any(|&y| y < lo || y > hi) {
                        return Err(Error::Invariant("labels lie outside their clipping bounds".into()));
                    }
                    Ok((hi - lo).as_f64())
                }
                None if self.privacy.is_some() => Err(Error::Privacy(
                    "private regression needs labels clipped to public bounds".into(),
                )),
                None => {
                    let (lo, hi) = labels
                        .iter()
                        .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &y| (lo.min(y), hi.max(y)));
                    Ok((hi - lo).as_f64())
                }
            },
        }
    }
}

fn check_bins<F: Scalar>(data: &Dataset<F>, bins: &[FeatureBins<F>]) -> Result<()> {
    if bins.len() != data.n_features() {
        return Err(Error::invalid(format!(
            "{} bin definitions for {} features",
            bins.len(),
            data.n_features()
        )));
    }
    for (b, spec) in bins.iter().zip(data.features()) {
        if b.feature() != spec {
            return Err(Error::invalid(format!("bins for `{}` do not match the data", spec.name)));
        }
    }
    Ok(())
}

/// Bins every feature: noisy quantile bins when `sigma_bin > 0`, exact
/// equal-density bins otherwise.
fn build_bins<F: Scalar>(data: &Dataset<F>, cfg: &TrainConfig, sigma_bin: f64) -> Result<(Vec<FeatureBins<F>>, usize)> {
    let sigma_bin = F::of(sigma_bin);
    let mut clamped = 0;
    let mut bins = Vec::with_capacity(data.n_features());
    for (k, spec) in data.features().iter().enumerate() {
        let mut rng = substream(cfg.seed, Purpose::Binning, 0, k);
        let b = match data.column(k) {
            Column::Numeric(values) => {
                let (lo, hi) = spec.range().expect("numeric column has a numeric spec");
                clamped += values.iter().filter(|&&v| v < lo || v > hi).count();
                dp_quantile_bins(values, spec, cfg.max_bins, sigma_bin, &mut rng)?
            }
            Column::Categorical(codes) => dp_categorical_bins(codes, spec, sigma_bin, &mut rng)?,
        };
        bins.push(b);
    }
    Ok((bins, clamped))
}

/// Non-private training.
pub fn train_ebm<F: Scalar>(train: &Dataset<F>, cfg: &TrainConfig) -> Result<GamModel<F>> {
    Ok(Trainer::new(*cfg).fit(train)?.model)
}

/// Differentially private training under `budget`.
pub fn train_dp_ebm<F: Scalar>(
    train: &Dataset<F>,
    cfg: &TrainConfig,
    budget: PrivacyBudget,
    kind: AccountantKind,
) -> Result<GamModel<F>> {
    Ok(Trainer::new(*cfg).private(budget, kind).fit(train)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.learning_rate, c.max_leaves, c.max_bins), (300, 0.01, 3, 32));
    }

    #[test]
    fn partition_shapes() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(random_partition(3, 1, &mut rng).groups(), &[0..3]);
        assert_eq!(random_partition(2, 3, &mut rng).groups(), &[0..1, 1..2]);
        assert_eq!(random_partition(1, 3, &mut rng).groups(), &[0..1]);
        for _ in 0..200 {
            let p = random_partition(32, 3, &mut rng);
            assert_eq!(p.groups().len(), 3);
            assert_eq!(p.groups()[0].start, 0);
            assert_eq!(p.n_bins(), 32);
            assert!(p.groups().windows(2).all(|w| w[0].end == w[1].start));
            assert!(p.groups().iter().all(|g| !g.is_empty()));
        }
    }

    #[test]
    fn leaf_update_examples() {
        let inc = leaf_update::<f64, ChaCha20Rng>(&[6.0], &[3.0], 1.0, 0.01, 1.0, 0.0, None);
        assert!((inc[0] - 0.02).abs() < 1e-15);
        let inc = leaf_update::<f64, ChaCha20Rng>(&[0.0], &[0.0], 1.0, 0.01, 1.0, 5.0, None);
        assert_eq!(inc[0], 0.0);
        let inc = leaf_update::<f64, ChaCha20Rng>(&[2.0], &[-4.0], 1.0, 0.5, 1.0, 0.0, None);
        assert_eq!(inc[0], 1.0);
    }

    #[test]
    fn residual_formulas() {
        assert_eq!(residual(Task::Regression, 2.0, 0.5), 1.5);
        assert_eq!(residual(Task::BinaryClassification, 1.0, 0.0), 0.5);
        assert_eq!(residual(Task::BinaryClassification, 0.0, 0.0), -0.5);
        for s in [-30.0, -1.0, 0.0, 2.0, 30.0] {
            for y in [0.0, 1.0] {
                let r = residual(Task::BinaryClassification, y, s);
                assert!(r > -1.0 && r < 1.0);
            }
        }
    }

    #[test]
    fn task_parsing() {
        assert_eq!("binary-classification".parse::<Task>().unwrap(), Task::BinaryClassification);
        assert_eq!("regression".parse::<Task>().unwrap(), Task::Regression);
        assert!("multiclass".parse::<Task>().is_err());
        assert_eq!(serde_json::to_string(&Task::BinaryClassification).unwrap(), "\"binary_classification\"");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { max_leaves: 0, ..Default::default() },
            TrainConfig { max_bins: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
