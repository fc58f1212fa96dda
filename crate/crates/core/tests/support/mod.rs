//! Reference implementations used as test oracles. Each one is written the
//! slow, obvious way and shares no code with the library.

#![allow(dead_code)]

use dpebm::dataset::Column;
use dpebm::{Dataset, FeatureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard normal CDF by composite Simpson integration of the density.
///
/// Integrates `φ` over `[x - 12, x]` for `x <= 0`; mass below that interval
/// is under `φ(x - 12)`, far beneath f64 resolution relative to `Φ(x)`.
pub fn phi_oracle(x: f64) -> f64 {
    if x > 0.0 {
        return 1.0 - phi_oracle(-x);
    }
    let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b) = (x - 12.0, x);
    let n = 24_000;
    let h = (b - a) / n as f64;
    let mut sum = density(a) + density(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * density(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// `δ(μ, ε)` straight from the conversion formula, with [`phi_oracle`].
pub fn delta_oracle(mu: f64, eps: f64) -> f64 {
    phi_oracle(-eps / mu + mu / 2.0) - eps.exp() * phi_oracle(-eps / mu - mu / 2.0)
}

/// Weighted least-squares monotone (non-decreasing) fit by enumerating every
/// split of the sequence into contiguous blocks. The optimum is always some
/// such split with each block at its weighted mean.
pub fn isotonic_brute(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for end in 1..=n {
            let boundary = end == n || mask & (1 << (end - 1)) != 0;
            if !boundary {
                continue;
            }
            let w: f64 = weights[start..end].iter().sum();
            let m: f64 = (start..end).map(|i| values[i] * weights[i]).sum::<f64>() / w;
            fit.extend(std::iter::repeat_n(m, end - start));
            start = end;
        }
        if fit.windows(2).any(|p| p[0] > p[1] + 1e-12) {
            continue;
        }
        let loss: f64 = (0..n).map(|i| weights[i] * (fit[i] - values[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, fit));
        }
    }
    best.expect("the all-pooled fit is always monotone").1
}

pub fn weighted_sse(fit: &[f64], values: &[f64], weights: &[f64]) -> f64 {
    (0..fit.len()).map(|i| weights[i] * (fit[i] - values[i]).powi(2)).sum()
}

/// AUROC as the fraction of (positive, negative) pairs ranked correctly, ties ½.
pub fn auroc_pairs(scores: &[f64], labels: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1.0 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0.0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Shape values after `t` forced two-leaf updates on a one-feature problem
/// whose bins hold labels with means `means`. Each update moves every bin a
/// fraction `eta` of the way to its mean.
pub fn two_bin_recursion(means: [f64; 2], eta: f64, t: usize) -> [f64; 2] {
    let mut f = [0.0; 2];
    for _ in 0..t {
        for b in 0..2 {
            f[b] += eta * (means[b] - f[b]);
        }
    }
    f
}

/// Synthetic additive regression data: three numeric features on [0, 1] and a
/// categorical one, labels clipped to [-3, 3].
pub fn synthetic_regression(n: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = vec![
        FeatureSpec::numeric("a", 0.0, 1.0).unwrap(),
        FeatureSpec::numeric("b", 0.0, 1.0).unwrap(),
        FeatureSpec::numeric("c", 0.0, 1.0).unwrap(),
        FeatureSpec::categorical("g", ["p", "q", "r"]).unwrap(),
    ];
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut cats = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let g: u32 = rng.random_range(0..3);
        let y = 2.0 * x[0] - (3.0 * x[1]).sin() + if x[2] > 0.5 { 0.5 } else { -0.5 } + [0.0, 0.7, -0.4][g as usize]
            + 0.1 * (rng.random::<f64>() - 0.5);
        for k in 0..3 {
            cols[k].push(x[k]);
        }
        cats.push(g);
        labels.push(y);
    }
    let mut columns: Vec<Column<f64>> = cols.into_iter().map(Column::Numeric).collect();
    columns.push(Column::Categorical(cats));
    let d = Dataset::new(specs, columns, labels, "y").unwrap();
    dpebm::dataset::clip_labels(d, -3.0, 3.0).unwrap()
}

/// Synthetic binary labels from a logistic additive model over the same
/// features as [`synthetic_regression`].
pub fn synthetic_classification(n: usize, seed: u64) -> Dataset<f64> {
    let reg = synthetic_regression(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC1A5);
    let labels: Vec<f64> = reg
        .labels()
        .iter()
        .map(|&s| {
            let p = 1.0 / (1.0 + (-2.0 * s).exp());
            if rng.random::<f64>() < p { 1.0 } else { 0.0 }
        })
        .collect();
    let columns = (0..reg.n_features()).map(|k| reg.column(k).clone()).collect();
    let d = Dataset::new(reg.features().to_vec(), columns, labels, "y").unwrap();
    dpebm::dataset::clip_labels(d, 0.0, 1.0).unwrap()
}
