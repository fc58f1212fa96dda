mod support;

use approx::assert_relative_eq;
use dpebm::accountant::{
    allocate_budget, calibrate_binning_sigma, calibrate_training_sigma, classic_sigma, compose_gdp, dp_to_gdp,
    gdp_to_dp, normal_cdf, PhaseBudget,
};
use dpebm::{AccountantKind, BudgetLedger, GdpParam, PrivacyBudget};
use proptest::prelude::*;
use support::{delta_oracle, phi_oracle};

// Computed once at 50 significant digits and frozen.
const SIGMA_TRAIN_EPS8_ADULT: f64 = 46.463248056328771;
const SIGMA_BIN_EPS05_ADULT: f64 = 297.92363126576514;
const SIGMA_GDP: [(f64, f64); 2] = [(0.5, 522.19336020278105), (1.0, 273.79048415764938)];
const SIGMA_CLASSIC: [(f64, f64); 2] = [(0.5, 1328.023481944243), (1.0, 681.32315833365367)];

fn mu(x: f64) -> GdpParam {
    GdpParam::new(x).unwrap()
}

#[test]
fn cdf_matches_quadrature() {
    for i in 0..=160 {
        let x = -30.0 + 0.25 * i as f64;
        let (got, want) = (normal_cdf(x), phi_oracle(x));
        if want > 1e-300 {
            assert_relative_eq!(got, want, max_relative = 1e-11);
        }
    }
}

#[test]
fn delta_matches_oracle_on_grid() {
    for i in 0..20 {
        let m = 0.05 * (200f64).powf(i as f64 / 19.0);
        for j in 0..20 {
            let eps = 8.0 * j as f64 / 19.0;
            let got = gdp_to_dp(mu(m), eps).unwrap();
            let want = delta_oracle(m, eps);
            assert!((got - want).abs() <= 1e-10, "mu={m} eps={eps}: {got} vs {want}");
        }
    }
}

#[test]
fn delta_examples() {
    assert!((gdp_to_dp(mu(1.0), 0.0).unwrap() - (2.0 * phi_oracle(0.5) - 1.0)).abs() < 1e-13);
    let want = phi_oracle(-0.5) - std::f64::consts::E * phi_oracle(-1.5);
    assert!((gdp_to_dp(mu(1.0), 1.0).unwrap() - want).abs() < 1e-13);
    assert!(gdp_to_dp(mu(1e-6), 1.0).unwrap() < 1e-300);
    assert!(GdpParam::new(-1.0).is_err());
    assert!(gdp_to_dp(mu(0.0), 1.0).is_err());
}

#[test]
fn round_trip_examples() {
    for m in [0.1, 1.0, 3.0] {
        for eps in [0.0, 0.5, 1.0, 4.0] {
            let d = gdp_to_dp(mu(m), eps).unwrap();
            if d > 0.0 && d < 1.0 {
                assert!((dp_to_gdp(eps, d).unwrap().mu() - m).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn smaller_delta_means_smaller_mu() {
    let a = dp_to_gdp(1.0, 1e-5).unwrap().mu();
    let b = dp_to_gdp(1.0, 1e-12).unwrap().mu();
    assert!(b < a);
    assert!(dp_to_gdp(1.0, 0.0).is_err());
    assert!(dp_to_gdp(1.0, 1.0).is_err());
}

#[test]
fn composition_cases() {
    assert_eq!(compose_gdp(&[1.0, 1.0, 1.0, 1.0]).unwrap().mu(), 2.0);
    assert_eq!(compose_gdp(&[0.7]).unwrap().mu(), 0.7);
    assert_eq!(compose_gdp(&[3.0, 4.0]).unwrap().mu(), 5.0);
    assert_eq!(compose_gdp(&[5.0, 12.0]).unwrap().mu(), 13.0);
    assert_eq!(compose_gdp(&[8.0, 0.0, 15.0]).unwrap().mu(), 17.0);
}

#[test]
fn classic_examples() {
    let one = classic_sigma(1, 1.0, 1.0, 1e-6).unwrap();
    assert_relative_eq!(one, (8.0 * (std::f64::consts::E + 1e6).ln()).sqrt(), max_relative = 1e-15);
    assert_relative_eq!(classic_sigma(4, 1.0, 1.0, 1e-6).unwrap(), 2.0 * one, max_relative = 1e-15);
    assert_relative_eq!(classic_sigma(1, 2.0, 1.0, 1e-6).unwrap(), 2.0 * one, max_relative = 1e-15);
}

#[test]
fn budget_allocation() {
    let (bin, train) = allocate_budget(&PrivacyBudget::new(1.0, 1e-6, 0.1).unwrap());
    assert_relative_eq!(bin.epsilon, 0.1);
    assert_relative_eq!(bin.delta, 1e-7);
    assert_relative_eq!(train.epsilon, 0.9);
    assert_relative_eq!(train.delta, 9e-7);
    assert_eq!(bin.epsilon + train.epsilon, 1.0);

    let (bin, train) = allocate_budget(&PrivacyBudget::new(2.0, 1e-6, 0.0).unwrap());
    assert_eq!((bin.epsilon, bin.delta), (0.0, 0.0));
    assert_eq!((train.epsilon, train.delta), (2.0, 1e-6));

    assert!(PrivacyBudget::new(-1.0, 1e-6, 0.1).is_err());
    assert!(PrivacyBudget::new(1.0, 0.0, 0.1).is_err());
    assert!(PrivacyBudget::new(1.0, 1e-6, 1.0).is_err());
}

#[test]
fn training_sigma_calibration() {
    let unit = dp_to_gdp(1.0, 0.12693673750664395).unwrap().mu();
    assert!((unit - 1.0).abs() < 1e-8);
    let budget = PhaseBudget { epsilon: 1.0, delta: 0.12693673750664395 };
    let s = calibrate_training_sigma(budget, 1, 1, AccountantKind::Gdp).unwrap();
    assert!((s - 1.0).abs() < 1e-8);

    let (_, train) = allocate_budget(&PrivacyBudget::new(8.0, 1e-6, 0.1).unwrap());
    let s = calibrate_training_sigma(train, 300, 14, AccountantKind::Gdp).unwrap();
    assert_relative_eq!(s, SIGMA_TRAIN_EPS8_ADULT, max_relative = 1e-8);
}

#[test]
fn binning_sigma_calibration() {
    let (bin, _) = allocate_budget(&PrivacyBudget::new(0.5, 1e-6, 0.1).unwrap());
    let one = calibrate_binning_sigma(bin, 1, AccountantKind::Gdp).unwrap();
    let all = calibrate_binning_sigma(bin, 14, AccountantKind::Gdp).unwrap();
    assert_relative_eq!(all, 14f64.sqrt() * one, max_relative = 1e-12);
    assert_relative_eq!(all, SIGMA_BIN_EPS05_ADULT, max_relative = 1e-8);
    let classic = calibrate_binning_sigma(bin, 14, AccountantKind::Classic).unwrap();
    assert_relative_eq!(classic, classic_sigma(14, 1.0, bin.epsilon, bin.delta).unwrap());
}

#[test]
fn gdp_needs_less_noise_than_classic() {
    for ((eps, gdp), (_, classic)) in SIGMA_GDP.iter().zip(&SIGMA_CLASSIC) {
        let budget = PhaseBudget { epsilon: *eps, delta: 1e-6 };
        let g = calibrate_training_sigma(budget, 300, 14, AccountantKind::Gdp).unwrap();
        let c = calibrate_training_sigma(budget, 300, 14, AccountantKind::Classic).unwrap();
        assert_relative_eq!(g, *gdp, max_relative = 1e-8);
        assert_relative_eq!(c, *classic, max_relative = 1e-12);
        assert!(g < c);
    }
}

#[test]
fn ledger_reconverts_within_budget() {
    let budget = PrivacyBudget::new(1.0, 1e-6, 0.1).unwrap();
    let (bin, train) = allocate_budget(&budget);
    let sigma_bin = calibrate_binning_sigma(bin, 5, AccountantKind::Gdp).unwrap();
    let sigma = calibrate_training_sigma(train, 40, 5, AccountantKind::Gdp).unwrap();
    let mut ledger = BudgetLedger::new();
    for k in 0..5 {
        ledger.record_gaussian(format!("bin/{k}"), sigma_bin);
    }
    for i in 0..200 {
        ledger.record_gaussian(format!("train/{i}"), sigma);
    }
    let check = ledger.reconvert(budget.epsilon, budget.delta).unwrap();
    assert!(check.epsilon <= 1.0 + 1e-9 && check.delta <= 1e-6 + 1e-9);
    // Training alone composes to √(E·K)/σ = μ(ε_train, δ_train).
    let training_only: Vec<f64> = ledger.entries()[5..].iter().map(|e| e.mu).collect();
    let mu_train = compose_gdp(&training_only).unwrap().mu();
    assert_relative_eq!(mu_train, dp_to_gdp(train.epsilon, train.delta).unwrap().mu(), max_relative = 1e-12);
}

proptest! {
    #[test]
    fn delta_increases_in_mu_and_decreases_in_eps(m in 0.05f64..8.0, dm in 0.01f64..1.0, eps in 0.0f64..8.0, de in 0.01f64..1.0) {
        let d = gdp_to_dp(mu(m), eps).unwrap();
        prop_assume!(d > 1e-250);
        prop_assert!(gdp_to_dp(mu(m + dm), eps).unwrap() > d);
        prop_assert!(gdp_to_dp(mu(m), eps + de).unwrap() < d);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn conversion_round_trip(m in 0.05f64..10.0, eps in 0.0f64..8.0) {
        let d = gdp_to_dp(mu(m), eps).unwrap();
        prop_assume!(d > 1e-300 && d < 1.0);
        // Where δ is nearly flat in μ, compare in δ instead of μ.
        let back = dp_to_gdp(eps, d).unwrap().mu();
        let d_back = gdp_to_dp(mu(back), eps).unwrap();
        prop_assert!((back - m).abs() < 1e-8 || (d_back - d).abs() <= 1e-12 * d.max(1e-300));
    }

    #[test]
    fn composition_is_order_free(mut mus in proptest::collection::vec(0.0f64..5.0, 1..20), seed in any::<u64>()) {
        let a = compose_gdp(&mus).unwrap().mu();
        let n = mus.len();
        mus.rotate_left((seed as usize) % n);
        mus.reverse();
        let b = compose_gdp(&mus).unwrap().mu();
        prop_assert_eq!(a, b);
        let first = mus[0];
        prop_assert_eq!(compose_gdp(&[first, 0.0]).unwrap().mu(), first);
    }

    #[test]
    fn classic_scales_with_sqrt_k(k in 1usize..5000, eps in 0.05f64..10.0, delta in 1e-10f64..1e-2) {
        let one = classic_sigma(1, 1.0, eps, delta).unwrap();
        let many = classic_sigma(k, 1.0, eps, delta).unwrap();
        prop_assert!((many - (k as f64).sqrt() * one).abs() <= 1e-12 * many);
    }
}
