use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
///
/// Computed from average ranks (Mann-Whitney U) in `O(n log n)`.
pub fn auroc<F: Scalar>(scores: &[F], labels: &[F]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let mut n_pos = 0usize;
    for &y in labels {
        if y == F::one() {
            n_pos += 1;
        } else if y != F::zero() {
            return Err(Error::invalid("auroc labels must be 0 or 1"));
        }
    }
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("auroc needs both positive and negative labels"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = order[i..j].iter().filter(|&&k| labels[k] == F::one()).count();
        pos_rank_sum += avg_rank * pos_in_tie as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn rmse<F: Scalar>(predictions: &[F], labels: &[F]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("rmse of an empty set"));
    }
    let sse: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let e = p.as_f64() - y.as_f64();
            e * e
        })
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.5);
        let s = [0.2, 0.7, 0.7, 0.1, 0.9];
        let y = [0.0, 1.0, 0.0, 0.0, 1.0];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = auroc(&s, &y).unwrap();
        assert!((auroc(&neg, &y).unwrap() - (1.0 - a)).abs() < 1e-15);
        assert!(auroc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
        assert!(auroc(&[0.1, 0.2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert!((rmse(&[3.5, 4.5], &[1.0, 2.0]).unwrap() - 2.5).abs() < 1e-15);
        assert!(rmse::<f64>(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
