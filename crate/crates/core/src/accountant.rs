//! Privacy accounting.
//!
//! Two interchangeable accountants calibrate the Gaussian noise:
//!
//! * **GDP**: a Gaussian mechanism with sensitivity Δ and noise `N(0, Δ²/μ²)` is
//!   μ-GDP; k such mechanisms compose to `sqrt(Σ μᵢ²)`-GDP; μ-GDP is exactly
//!   (ε, δ)-DP for `δ(ε) = Φ(-ε/μ + μ/2) - e^ε Φ(-ε/μ - μ/2)`.
//! * **Classic**: strong composition, where noise variance
//!   `8 k Δ² ln(e + ε/δ) / ε²` gives (ε, δ)-DP over k adaptive releases.
//!
//! Everything here is pure `f64` arithmetic; nothing is random or stateful
//! except the [`BudgetLedger`], which only records what it is told.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountantKind {
    Classic,
    Gdp,
}

impl fmt::Display for AccountantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccountantKind::Classic => "classic",
            AccountantKind::Gdp => "gdp",
        })
    }
}

impl FromStr for AccountantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classic" => Ok(AccountantKind::Classic),
            "gdp" => Ok(AccountantKind::Gdp),
            other => Err(Error::invalid(format!(
                "unknown accountant `{other}` (expected `classic` or `gdp`)"
            ))),
        }
    }
}

/// Total (ε, δ) budget and the fraction of it spent on binning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub bin_fraction: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, bin_fraction: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be finite and > 0 (got {epsilon})")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1) (got {delta})")));
        }
        if !(0.0..1.0).contains(&bin_fraction) {
            return Err(Error::invalid(format!(
                "bin_fraction must lie in [0, 1) (got {bin_fraction})"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            bin_fraction,
        })
    }
}

/// The (ε, δ) share of one training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBudget {
    pub epsilon: f64,
    pub delta: f64,
}

/// μ for Gaussian differential privacy.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GdpParam(f64);

impl GdpParam {
    pub fn new(mu: f64) -> Result<Self> {
        if mu.is_finite() && mu >= 0.0 {
            Ok(Self(mu))
        } else {
            Err(Error::Privacy(format!("mu must be finite and >= 0 (got {mu})")))
        }
    }

    pub fn mu(self) -> f64 {
        self.0
    }
}

/// Standard normal CDF, `Φ(x) = erfc(-x/√2) / 2`.
///
/// `erfc` is the fdlibm rational approximation (via `libm`), accurate to about
/// one ulp, and relatively accurate deep into the lower tail. Beyond
/// `x < -38.5` the result is below the smallest normal double and is clamped
/// to 0; beyond `x > 8.3` it rounds to 1.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < -38.5 {
        return 0.0;
    }
    if x > 8.3 {
        return 1.0;
    }
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// δ at which a μ-GDP mechanism is (ε, δ)-DP.
pub fn gdp_to_dp(mu: GdpParam, epsilon: f64) -> Result<f64> {
    let mu = mu.mu();
    if mu <= 0.0 {
        return Err(Error::Privacy("mu must be > 0".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Privacy(format!("epsilon must be finite and >= 0 (got {epsilon})")));
    }
    let a = normal_cdf(-epsilon / mu + mu / 2.0);
    let tail = normal_cdf(-epsilon / mu - mu / 2.0);
    // e^ε · Φ(·) evaluated in log space so large ε cannot overflow.
    let b = if tail > 0.0 { (epsilon + tail.ln()).exp() } else { 0.0 };
    Ok((a - b).clamp(0.0, 1.0))
}

pub const MU_LOWER: f64 = 1e-8;
pub const MU_UPPER: f64 = 100.0;
const BISECTION_TOL: f64 = 1e-10;

/// The μ whose (ε, δ) conversion equals `delta` at `epsilon`.
///
/// Bisection on `[1e-8, 100]` to an absolute tolerance of `1e-10`, relying on δ
/// being strictly increasing in μ.
pub fn dp_to_gdp(epsilon: f64, delta: f64) -> Result<GdpParam> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Privacy(format!("epsilon must be finite and >= 0 (got {epsilon})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Privacy(format!("delta must lie in (0, 1) (got {delta})")));
    }
    let (mut lo, mut hi) = (MU_LOWER, MU_UPPER);
    let d_lo = gdp_to_dp(GdpParam(lo), epsilon)?;
    let d_hi = gdp_to_dp(GdpParam(hi), epsilon)?;
    if !(d_lo <= delta && delta <= d_hi) {
        return Err(Error::Privacy(format!(
            "delta {delta} at epsilon {epsilon} is outside the range reachable with mu in [{MU_LOWER}, {MU_UPPER}]"
        )));
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if gdp_to_dp(GdpParam(mid), epsilon)? < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GdpParam(0.5 * (lo + hi)))
}

/// Composition of GDP mechanisms: the Euclidean norm of their μ values.
///
/// Squares are summed in ascending order, which makes the result independent
/// of the order of `mus`.
pub fn compose_gdp(mus: &[f64]) -> Result<GdpParam> {
    if let Some(bad) = mus.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(Error::Privacy(format!("mu must be finite and >= 0 (got {bad})")));
    }
    let mut squares: Vec<f64> = mus.iter().map(|m| m * m).collect();
    squares.sort_by(f64::total_cmp);
    GdpParam::new(squares.iter().sum::<f64>().sqrt())
}

/// Noise scale for k-fold strong composition:
/// `σ = sqrt(8 k Δ² ln(e + ε/δ)) / ε`.
pub fn classic_sigma(k: usize, sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Privacy("composition count must be >= 1".into()));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::Privacy("sensitivity must be finite and > 0".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Privacy("epsilon must be finite and > 0".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Privacy("delta must lie in (0, 1)".into()));
    }
    let variance_times_eps2 =
        8.0 * k as f64 * sensitivity * sensitivity * (std::f64::consts::E + epsilon / delta).ln();
    Ok(variance_times_eps2.sqrt() / epsilon)
}

/// Single-release Gaussian mechanism bound, `σ > sqrt(2 ln(1.25/δ)) Δ / ε`,
/// valid for ε in (0, 1). Not used for calibration; kept as a cross-check on
/// the GDP conversion.
pub fn gaussian_mechanism_sigma(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Privacy("the single-release bound needs epsilon in (0, 1)".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Privacy("delta must lie in (0, 1)".into()));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * sensitivity / epsilon)
}

/// Splits the budget between binning and training. ε and δ are split in the
/// same proportion; the two phases compose additively.
pub fn allocate_budget(total: &PrivacyBudget) -> (PhaseBudget, PhaseBudget) {
    let bin = PhaseBudget {
        epsilon: total.epsilon * total.bin_fraction,
        delta: total.delta * total.bin_fraction,
    };
    let train = PhaseBudget {
        epsilon: total.epsilon - bin.epsilon,
        delta: total.delta - bin.delta,
    };
    (bin, train)
}

/// σ for the leaf sums: each of the `epochs · features` iterations releases the
/// leaf sums with noise `σ · η · R`, i.e. a noise multiplier of σ relative to
/// the sensitivity.
pub fn calibrate_training_sigma(
    budget: PhaseBudget,
    epochs: usize,
    features: usize,
    kind: AccountantKind,
) -> Result<f64> {
    if epochs == 0 || features == 0 {
        return Err(Error::Privacy("epochs and features must be >= 1".into()));
    }
    let k = epochs * features;
    match kind {
        AccountantKind::Gdp => Ok((k as f64).sqrt() / dp_to_gdp(budget.epsilon, budget.delta)?.mu()),
        AccountantKind::Classic => classic_sigma(k, 1.0, budget.epsilon, budget.delta),
    }
}

/// σ for the per-feature histogram counts (sensitivity 1), composed over all
/// `features` histograms.
pub fn calibrate_binning_sigma(budget: PhaseBudget, features: usize, kind: AccountantKind) -> Result<f64> {
    if features == 0 {
        return Err(Error::Privacy("features must be >= 1".into()));
    }
    match kind {
        AccountantKind::Gdp => Ok((features as f64).sqrt() / dp_to_gdp(budget.epsilon, budget.delta)?.mu()),
        AccountantKind::Classic => classic_sigma(features, 1.0, budget.epsilon, budget.delta),
    }
}

/// Running record of every noisy release, each as a μ-GDP cost.
///
/// A Gaussian release with noise multiplier σ (noise standard deviation over
/// sensitivity) is exactly (1/σ)-GDP whichever accountant calibrated σ, so the
/// ledger can audit both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub mu: f64,
}

/// Result of converting the ledger's composed μ back to (ε, δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub mu: f64,
    /// Smallest ε at which the composed mechanism meets the target δ.
    pub epsilon: f64,
    /// δ of the composed mechanism at the target ε.
    pub delta: f64,
}

impl LedgerCheck {
    pub fn within(&self, epsilon: f64, delta: f64, tol: f64) -> bool {
        self.epsilon <= epsilon + tol && self.delta <= delta + tol
    }
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a Gaussian release with noise multiplier `sigma`.
    pub fn record_gaussian(&mut self, label: impl Into<String>, sigma: f64) {
        self.entries.push(LedgerEntry {
            label: label.into(),
            mu: 1.0 / sigma,
        });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> Result<GdpParam> {
        let mus: Vec<f64> = self.entries.iter().map(|e| e.mu).collect();
        compose_gdp(&mus)
    }

    pub fn reconvert(&self, epsilon: f64, delta: f64) -> Result<LedgerCheck> {
        let mu = self.total()?;
        if mu.mu() == 0.0 {
            return Ok(LedgerCheck {
                mu: 0.0,
                epsilon: 0.0,
                delta: 0.0,
            });
        }
        let delta_at_eps = gdp_to_dp(mu, epsilon)?;
        Ok(LedgerCheck {
            mu: mu.mu(),
            epsilon: epsilon_for_delta(mu, delta)?,
            delta: delta_at_eps,
        })
    }
}

/// Smallest ε ≥ 0 with `gdp_to_dp(mu, ε) <= delta` (δ is decreasing in ε).
pub fn epsilon_for_delta(mu: GdpParam, delta: f64) -> Result<f64> {
    if gdp_to_dp(mu, 0.0)? <= delta {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while gdp_to_dp(mu, hi)? > delta {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Privacy("no finite epsilon reaches the requested delta".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > BISECTION_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if gdp_to_dp(mu, mid)? > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
