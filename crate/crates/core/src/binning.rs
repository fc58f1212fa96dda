//! Public per-feature bin definitions.
//!
//! Numeric features are cut into contiguous intervals; categorical features get
//! one bin per vocabulary entry. Each definition carries a count per bin, which
//! is exact for non-private training and noisy (Gaussian, sensitivity 1) for
//! private training.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{FeatureKind, FeatureSpec, Value};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Position of a bin within its [`FeatureBins`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinIndex(usize);

impl BinIndex {
    pub fn get(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins<F> {
    feature: FeatureSpec<F>,
    /// Cut points for numeric features (`n_bins + 1` of them); empty for categorical.
    edges: Vec<F>,
    counts: Vec<F>,
    is_private: bool,
    noise_scale: F,
}

impl<F: Scalar> FeatureBins<F> {
    /// Builds and validates a bin definition.
    ///
    /// Numeric: `edges` strictly increasing, first = min, last = max of the
    /// feature, one count per interval. Categorical: `edges` empty, one count
    /// per category.
    pub fn from_parts(
        feature: FeatureSpec<F>,
        edges: Vec<F>,
        counts: Vec<F>,
        is_private: bool,
        noise_scale: F,
    ) -> Result<Self> {
        let name = &feature.name;
        if !(noise_scale >= F::zero() && noise_scale.is_finite()) {
            return Err(Error::invalid(format!("`{name}`: noise_scale must be finite and >= 0")));
        }
        if counts.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("`{name}`: non-finite bin count")));
        }
        match &feature.kind {
            FeatureKind::Numeric { min, max } => {
                if edges.len() < 2 {
                    return Err(Error::invalid(format!("`{name}`: need at least two edges")));
                }
                if edges[0] != *min || edges[edges.len() - 1] != *max {
                    return Err(Error::invalid(format!(
                        "`{name}`: edges must start at {min} and end at {max}"
                    )));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid(format!("`{name}`: edges not strictly increasing")));
                }
                if counts.len() != edges.len() - 1 {
                    return Err(Error::invalid(format!(
                        "`{name}`: {} counts for {} bins",
                        counts.len(),
                        edges.len() - 1
                    )));
                }
            }
            FeatureKind::Categorical { vocabulary } => {
                if !edges.is_empty() {
                    return Err(Error::invalid(format!("`{name}`: categorical bins take no edges")));
                }
                if counts.len() != vocabulary.len() {
                    return Err(Error::invalid(format!(
                        "`{name}`: {} counts for {} categories",
                        counts.len(),
                        vocabulary.len()
                    )));
                }
            }
        }
        Ok(Self {
            feature,
            edges,
            counts,
            is_private,
            noise_scale,
        })
    }

    pub fn feature(&self) -> &FeatureSpec<F> {
        &self.feature
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Cut points, for numeric features.
    pub fn edges(&self) -> Option<&[F]> {
        self.feature.is_numeric().then_some(self.edges.as_slice())
    }

    pub fn counts(&self) -> &[F] {
        &self.counts
    }

    pub fn is_private(&self) -> bool {
        self.is_private
    }

    pub fn noise_scale(&self) -> F {
        self.noise_scale
    }

    /// Bin containing `x`: `edges[i] <= x < edges[i+1]`, with the last bin
    /// right-closed and out-of-range numbers clamped to the first/last bin.
    pub fn lookup(&self, x: &Value<F>) -> Result<BinIndex> {
        match (&self.feature.kind, x) {
            (FeatureKind::Numeric { .. }, Value::Number(v)) => {
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite value for `{}`",
                        self.feature.name
                    )));
                }
                Ok(BinIndex(numeric_bin(&self.edges, *v)))
            }
            (FeatureKind::Categorical { vocabulary }, Value::Category(c)) => {
                if *c < vocabulary.len() {
                    Ok(BinIndex(*c))
                } else {
                    Err(Error::UnknownCategory {
                        feature: self.feature.name.clone(),
                        value: format!("#{c}"),
                    })
                }
            }
            _ => Err(Error::invalid(format!(
                "value kind does not match feature `{}`",
                self.feature.name
            ))),
        }
    }
}

fn numeric_bin<F: Scalar>(edges: &[F], x: F) -> usize {
    let n_bins = edges.len() - 1;
    edges[1..n_bins].partition_point(|e| *e <= x)
}

/// `n` bins of equal width spanning the feature's range; counts zeroed.
pub fn equal_width_bins<F: Scalar>(spec: &FeatureSpec<F>, n: usize) -> Result<FeatureBins<F>> {
    let (min, max) = spec
        .range()
        .ok_or_else(|| Error::invalid(format!("`{}` is not numeric", spec.name)))?;
    if n == 0 {
        return Err(Error::invalid("number of bins must be positive"));
    }
    let span = max - min;
    let nf = F::from_count(n);
    let mut edges: Vec<F> = (0..n).map(|i| min + span * (F::from_count(i) / nf)).collect();
    edges.push(max);
    FeatureBins::from_parts(spec.clone(), edges, vec![F::zero(); n], false, F::zero())
}

/// Exact counts of `values` over `bins`. Returns the filled bins and how many
/// values fell outside the feature range and were clamped into an end bin.
pub fn histogram<F: Scalar>(values: &[F], bins: &FeatureBins<F>) -> Result<(FeatureBins<F>, usize)> {
    let (min, max) = bins
        .feature
        .range()
        .ok_or_else(|| Error::invalid(format!("`{}` is not numeric", bins.feature.name)))?;
    let mut counts = vec![F::zero(); bins.n_bins()];
    let mut clamped = 0;
    for &x in values {
        if !x.is_finite() {
            return Err(Error::invalid(format!("non-finite value for `{}`", bins.feature.name)));
        }
        if x < min || x > max {
            clamped += 1;
        }
        let b = numeric_bin(&bins.edges, x);
        counts[b] = counts[b] + F::one();
    }
    let mut out = bins.clone();
    out.counts = counts;
    Ok((out, clamped))
}

/// Differentially private quantile binning.
///
/// Builds `2m` equal-width bins, adds `N(0, sigma_bin²)` noise to each count,
/// then sweeps left to right folding any bin whose (noisy) count is below
/// `t = N / m` into its right neighbour. If the last bin is still below `t`
/// it is folded into its left neighbour. Only cut points are deleted, so the
/// result's edges are a subset of the initial equal-width edges.
///
/// With `sigma_bin = 0` this is the exact equal-density binning used for
/// non-private training.
pub fn dp_quantile_bins<F: Scalar, R: Rng + ?Sized>(
    values: &[F],
    spec: &FeatureSpec<F>,
    m: usize,
    sigma_bin: F,
    rng: &mut R,
) -> Result<FeatureBins<F>> {
    if m == 0 {
        return Err(Error::invalid("target bin count must be positive"));
    }
    if !(sigma_bin >= F::zero() && sigma_bin.is_finite()) {
        return Err(Error::invalid("binning noise scale must be finite and >= 0"));
    }
    let initial = equal_width_bins(spec, 2 * m)?;
    let (mut hist, _) = histogram(values, &initial)?;
    if sigma_bin > F::zero() {
        for c in hist.counts.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *c = *c + sigma_bin * F::of(z);
        }
    }
    let threshold = F::from_count(values.len()) / F::from_count(m);
    let (edges, counts) = merge_small_bins(&hist.edges, &hist.counts, threshold);
    FeatureBins::from_parts(spec.clone(), edges, counts, sigma_bin > F::zero(), sigma_bin)
}

fn merge_small_bins<F: Scalar>(edges: &[F], counts: &[F], threshold: F) -> (Vec<F>, Vec<F>) {
    let n = counts.len();
    let mut out_edges = vec![edges[0]];
    let mut out_counts: Vec<F> = Vec::with_capacity(n);
    let mut carry = F::zero();
    for i in 0..n {
        let c = counts[i] + carry;
        if c < threshold && i + 1 < n {
            carry = c;
            continue;
        }
        out_edges.push(edges[i + 1]);
        out_counts.push(c);
        carry = F::zero();
    }
    let k = out_counts.len();
    if k > 1 && out_counts[k - 1] < threshold {
        let last = out_counts.pop().expect("k > 1");
        out_counts[k - 2] = out_counts[k - 2] + last;
        out_edges.remove(k - 1);
    }
    (out_edges, out_counts)
}

/// One bin per category, in vocabulary order.
pub fn categorical_bins<F: Scalar>(
    spec: &FeatureSpec<F>,
    counts_noisy: Vec<F>,
    noise_scale: F,
) -> Result<FeatureBins<F>> {
    if spec.is_numeric() {
        return Err(Error::invalid(format!("`{}` is not categorical", spec.name)));
    }
    FeatureBins::from_parts(spec.clone(), Vec::new(), counts_noisy, noise_scale > F::zero(), noise_scale)
}

/// Category counts with `N(0, sigma_bin²)` noise added to each.
pub fn dp_categorical_bins<F: Scalar, R: Rng + ?Sized>(
    codes: &[u32],
    spec: &FeatureSpec<F>,
    sigma_bin: F,
    rng: &mut R,
) -> Result<FeatureBins<F>> {
    let k = spec
        .vocabulary()
        .ok_or_else(|| Error::invalid(format!("`{}` is not categorical", spec.name)))?
        .len();
    let mut counts = vec![F::zero(); k];
    for &c in codes {
        let c = c as usize;
        if c >= k {
            return Err(Error::UnknownCategory {
                feature: spec.name.clone(),
                value: format!("#{c}"),
            });
        }
        counts[c] = counts[c] + F::one();
    }
    if sigma_bin > F::zero() {
        for c in counts.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *c = *c + sigma_bin * F::of(z);
        }
    }
    categorical_bins(spec, counts, sigma_bin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn spec(min: f64, max: f64) -> FeatureSpec<f64> {
        FeatureSpec::numeric("x", min, max).unwrap()
    }

    fn edges(b: &FeatureBins<f64>) -> Vec<f64> {
        b.edges().unwrap().to_vec()
    }

    #[test]
    fn equal_width_edges() {
        assert_eq!(edges(&equal_width_bins(&spec(0.0, 10.0), 2).unwrap()), vec![0.0, 5.0, 10.0]);
        assert_eq!(edges(&equal_width_bins(&spec(0.0, 10.0), 1).unwrap()), vec![0.0, 10.0]);
        let b = equal_width_bins(&spec(-3.0, 7.0), 64).unwrap();
        assert_eq!(b.n_bins(), 64);
        for (i, e) in b.edges().unwrap().iter().enumerate() {
            let exact = -3.0 + 10.0 * i as f64 / 64.0;
            assert!((e - exact).abs() <= f64::EPSILON * 10.0);
        }
        let cat = FeatureSpec::<f64>::categorical("c", ["a"]).unwrap();
        assert!(equal_width_bins(&cat, 2).is_err());
        assert!(equal_width_bins(&spec(0.0, 1.0), 0).is_err());
    }

    #[test]
    fn histogram_half_open_rule() {
        let b = equal_width_bins(&spec(0.0, 10.0), 2).unwrap();
        let (h, clamped) = histogram(&[1.0, 2.0, 9.0], &b).unwrap();
        assert_eq!(h.counts(), &[2.0, 1.0]);
        assert_eq!(clamped, 0);
        let (h, _) = histogram(&[], &b).unwrap();
        assert_eq!(h.counts(), &[0.0, 0.0]);
        let (h, _) = histogram(&[5.0], &b).unwrap();
        assert_eq!(h.counts(), &[0.0, 1.0]);
        let (h, _) = histogram(&[10.0], &b).unwrap();
        assert_eq!(h.counts(), &[0.0, 1.0]);
        let (h, clamped) = histogram(&[-1.0, 11.0], &b).unwrap();
        assert_eq!(h.counts(), &[1.0, 1.0]);
        assert_eq!(clamped, 2);
    }

    #[test]
    fn lookup_rules() {
        let b = equal_width_bins(&spec(0.0, 10.0), 2).unwrap();
        let at = |x: f64| b.lookup(&Value::Number(x)).unwrap().get();
        assert_eq!(at(7.0), 1);
        assert_eq!(at(-3.0), 0);
        assert_eq!(at(10.0), 1);
        assert_eq!(at(5.0), 1);
        assert_eq!(at(4.999), 0);
        assert_eq!(at(1e9), 1);
        assert!(b.lookup(&Value::Number(f64::NAN)).is_err());
        assert!(b.lookup(&Value::Category(0)).is_err());
    }

    #[test]
    fn categorical_lookup_and_bins() {
        let s = FeatureSpec::<f64>::categorical("c", ["A", "B"]).unwrap();
        let b = categorical_bins(&s, vec![3.2, 7.9], 1.0).unwrap();
        assert_eq!(b.n_bins(), 2);
        assert!(b.is_private());
        assert_eq!(b.lookup(&Value::Category(1)).unwrap().get(), 1);
        assert!(matches!(b.lookup(&Value::Category(2)), Err(Error::UnknownCategory { .. })));
        assert!(categorical_bins(&s, vec![1.0], 0.0).is_err());

        let one = FeatureSpec::<f64>::categorical("c", ["only"]).unwrap();
        assert_eq!(categorical_bins(&one, vec![5.0], 0.0).unwrap().n_bins(), 1);
        let many: Vec<String> = (0..41).map(|i| format!("country{i}")).collect();
        let s41 = FeatureSpec::<f64>::categorical("native-country", many).unwrap();
        assert_eq!(categorical_bins(&s41, vec![0.0; 41], 0.0).unwrap().n_bins(), 41);
    }

    #[test]
    fn dp_categorical_counts_exact_without_noise() {
        let s = FeatureSpec::<f64>::categorical("c", ["A", "B", "C"]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let b = dp_categorical_bins(&[0, 2, 2, 1, 2], &s, 0.0, &mut rng).unwrap();
        assert_eq!(b.counts(), &[1.0, 1.0, 3.0]);
        assert!(!b.is_private());
        assert!(dp_categorical_bins(&[3], &s, 0.0, &mut rng).is_err());
    }

    #[test]
    fn quantile_bins_on_uniform_grid() {
        // Evenly spaced points: each of the 20 initial bins holds exactly 500,
        // so pairs merge into 10 bins of 1000.
        let n = 10_000;
        let values: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let b = dp_quantile_bins(&values, &spec(0.0, 1.0), 10, 0.0, &mut rng).unwrap();
        assert_eq!(b.n_bins(), 10);
        for c in b.counts() {
            assert!((c - 1000.0).abs() <= 1.0);
        }
        assert!(!b.is_private());
    }

    #[test]
    fn quantile_bins_collapse_point_mass() {
        // Hand trace: t = 4/2 = 2, counts [4, 0, 0, 0]. Bin 0 is kept, bins 1..3
        // carry zero into the last bin, which is below t and folds left.
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let b = dp_quantile_bins(&[0.0; 4], &spec(0.0, 1.0), 2, 0.0, &mut rng).unwrap();
        assert_eq!(b.n_bins(), 1);
        assert_eq!(b.counts(), &[4.0]);
        assert_eq!(edges(&b), vec![0.0, 1.0]);
    }

    #[test]
    fn merge_is_single_left_to_right_pass() {
        let e = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let (edges, counts) = merge_small_bins(&e, &[5.0, 1.0, 1.0, 4.0, 6.0], 4.0);
        // 1 and 1 + 1 stay below t, so both carry into the bin ending at 4.
        assert_eq!(edges, vec![0.0, 1.0, 4.0, 5.0]);
        assert_eq!(counts, vec![5.0, 6.0, 6.0]);
        // Last bin too small: folds into its left neighbour.
        let (edges, counts) = merge_small_bins(&e, &[5.0, 5.0, 5.0, 5.0, 1.0], 4.0);
        assert_eq!(edges, vec![0.0, 1.0, 2.0, 3.0, 5.0]);
        assert_eq!(counts, vec![5.0, 5.0, 5.0, 6.0]);
        // Everything below threshold: a single bin remains.
        let (edges, counts) = merge_small_bins(&e, &[1.0, -2.0, 1.0, 0.5, 0.5], 4.0);
        assert_eq!(edges, vec![0.0, 5.0]);
        assert_eq!(counts, vec![1.0]);
    }

    #[test]
    fn quantile_bins_merge_only_up_to_threshold() {
        // 2m bins each already at t: nothing merges.
        let values: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let b = dp_quantile_bins(&values, &spec(0.0, 1.0), 2, 0.0, &mut rng).unwrap();
        // t = 20, four bins of 10 -> two bins of 20.
        assert_eq!(b.counts(), &[20.0, 20.0]);
        let values: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).collect();
        let b = dp_quantile_bins(&values, &spec(0.0, 1.0), 4, 0.0, &mut rng).unwrap();
        // t = 10: eight bins of 5 merge pairwise into four bins of 10.
        assert_eq!(b.counts(), &[10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn noisy_quantile_bins_are_reproducible() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 37) % 1000) as f64 / 1000.0).collect();
        let run = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            dp_quantile_bins(&values, &spec(0.0, 1.0), 8, 5.0, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        let b = run(9);
        assert!(b.is_private());
        assert_eq!(b.noise_scale(), 5.0);
    }

    #[test]
    fn from_parts_validates() {
        let s = spec(0.0, 1.0);
        assert!(FeatureBins::from_parts(s.clone(), vec![0.0, 0.5, 1.0], vec![1.0, 2.0], false, 0.0).is_ok());
        assert!(FeatureBins::from_parts(s.clone(), vec![0.0, 0.5, 1.0], vec![1.0], false, 0.0).is_err());
        assert!(FeatureBins::from_parts(s.clone(), vec![0.0, 0.5, 0.5, 1.0], vec![1.0; 3], false, 0.0).is_err());
        assert!(FeatureBins::from_parts(s.clone(), vec![0.1, 1.0], vec![1.0], false, 0.0).is_err());
        assert!(FeatureBins::from_parts(s, vec![0.0, 1.0], vec![1.0], false, -1.0).is_err());
    }

    #[test]
    fn works_with_f32() {
        let s = FeatureSpec::<f32>::numeric("x", 0.0, 10.0).unwrap();
        let b = equal_width_bins(&s, 2).unwrap();
        let (h, _) = histogram(&[1.0f32, 2.0, 9.0], &b).unwrap();
        assert_eq!(h.counts(), &[2.0f32, 1.0]);
    }
}
