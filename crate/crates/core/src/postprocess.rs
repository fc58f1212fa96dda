//! Model edits that use only the model itself: direct changes to shape values
//! and monotone projection by isotonic regression. Neither reads training data.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{EditRecord, GamModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonotoneDirection {
    Increasing,
    Decreasing,
}

impl fmt::Display for MonotoneDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonotoneDirection::Increasing => "increasing",
            MonotoneDirection::Decreasing => "decreasing",
        })
    }
}

impl FromStr for MonotoneDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "increasing" | "inc" => Ok(MonotoneDirection::Increasing),
            "decreasing" | "dec" => Ok(MonotoneDirection::Decreasing),
            other => Err(Error::invalid(format!(
                "unknown direction `{other}` (expected `increasing` or `decreasing`)"
            ))),
        }
    }
}

/// Weighted isotonic regression by pooling adjacent violators.
///
/// Returns the monotone sequence minimizing `Σ wᵢ (outᵢ - valuesᵢ)²`. Each
/// pooled block takes the weighted mean of its members. The decreasing fit is
/// the negated increasing fit of the negated values.
pub fn pav<F: Scalar>(values: &[F], weights: &[F], dir: MonotoneDirection) -> Result<Vec<F>> {
    if values.is_empty() {
        return Err(Error::invalid("pav needs at least one value"));
    }
    if values.len() != weights.len() {
        return Err(Error::invalid(format!(
            "pav got {} values and {} weights",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > F::zero() && w.is_finite())) {
        return Err(Error::invalid("pav weights must be finite and > 0"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("pav values must be finite"));
    }
    let sign = match dir {
        MonotoneDirection::Increasing => F::one(),
        MonotoneDirection::Decreasing => -F::one(),
    };

    // Each block: (weighted mean, total weight, length).
    let mut blocks: Vec<(F, F, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (sign * v, w, 1);
        while let Some(&(m, bw, n)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let total = bw + cur.1;
            cur = ((m * bw + cur.0 * cur.1) / total, total, n + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, n) in blocks {
        out.extend(std::iter::repeat_n(sign * m, n));
    }
    Ok(out)
}

/// Projects one numeric feature's shape onto monotone functions, weighting
/// each bin by its released count floored at 1.
pub fn enforce_monotone<F: Scalar>(model: &GamModel<F>, feature: &str, dir: MonotoneDirection) -> Result<GamModel<F>> {
    let k = model.term_index(feature)?;
    let term = &model.terms()[k];
    if !term.bins().feature().is_numeric() {
        return Err(Error::invalid(format!(
            "`{feature}` is categorical; its bins have no order to be monotone in"
        )));
    }
    let weights: Vec<F> = term.bins().counts().iter().map(|c| c.max(F::one())).collect();
    let fitted = pav(term.shape().values(), &weights, dir)?;
    let mut out = model.clone();
    out.term_mut(k).shape_mut().values_mut().copy_from_slice(&fitted);
    out.push_edit(EditRecord::now(
        "monotonize",
        feature,
        json!({ "direction": dir.to_string() }),
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditAction {
    Set(f64),
    Add(f64),
}

/// Change to the shape values of bins `bins.start..bins.end` of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditCommand {
    pub feature: String,
    pub bins: Range<usize>,
    pub action: EditAction,
}

impl EditCommand {
    pub fn set(feature: impl Into<String>, bins: Range<usize>, value: f64) -> Self {
        Self {
            feature: feature.into(),
            bins,
            action: EditAction::Set(value),
        }
    }

    pub fn add(feature: impl Into<String>, bins: Range<usize>, delta: f64) -> Self {
        Self {
            feature: feature.into(),
            bins,
            action: EditAction::Add(delta),
        }
    }
}

/// Parses a bin range written `lo..hi` (half-open) or a single index `i`.
pub fn parse_bin_range(text: &str) -> Result<Range<usize>> {
    let bad = || Error::invalid(format!("bad bin range `{text}` (expected `lo..hi` or an index)"));
    match text.split_once("..") {
        Some((lo, hi)) => {
            let lo = lo.trim().parse().map_err(|_| bad())?;
            let hi = hi.trim().parse().map_err(|_| bad())?;
            Ok(lo..hi)
        }
        None => {
            let i: usize = text.trim().parse().map_err(|_| bad())?;
            Ok(i..i + 1)
        }
    }
}

pub fn edit<F: Scalar>(model: &GamModel<F>, cmd: &EditCommand) -> Result<GamModel<F>> {
    let k = model.term_index(&cmd.feature)?;
    let n_bins = model.terms()[k].bins().n_bins();
    if cmd.bins.start >= cmd.bins.end || cmd.bins.end > n_bins {
        return Err(Error::invalid(format!(
            "bins {}..{} out of range for `{}` ({} bins)",
            cmd.bins.start, cmd.bins.end, cmd.feature, n_bins
        )));
    }
    let (operation, amount) = match cmd.action {
        EditAction::Set(v) => ("set", v),
        EditAction::Add(d) => ("add", d),
    };
    if !amount.is_finite() {
        return Err(Error::invalid("edit value must be finite"));
    }
    let amount_f = F::of(amount);
    let mut out = model.clone();
    for v in &mut out.term_mut(k).shape_mut().values_mut()[cmd.bins.clone()] {
        *v = match cmd.action {
            EditAction::Set(_) => amount_f,
            EditAction::Add(_) => *v + amount_f,
        };
    }
    let key = if operation == "set" { "value" } else { "delta" };
    out.push_edit(EditRecord::now(
        operation,
        &cmd.feature,
        json!({ "bins": [cmd.bins.start, cmd.bins.end], key: amount }),
    ));
    Ok(out)
}
