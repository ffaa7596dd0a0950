//! Entropic risk of Monte Carlo cost samples and the matching sample weights.
//!
//! For `σ > 0` the risk is `(1/σ)·log((1/M)·Σ exp(σ·J_j))`; `σ = 0` is the
//! risk-neutral sample mean, handled as an exact branch. The gradient of the
//! risk with respect to a perturbation is a softmax-weighted average of the
//! per-sample gradients, with weights `∝ exp(σ·J_j)`.

use crate::error::invalid;
use crate::{Error, Result, Vec4};

pub fn validate_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(invalid(
            "sigma",
            "risk sensitivity must be finite and nonnegative",
        ))
    }
}

fn check_costs(costs: &[f64]) -> Result<()> {
    if costs.is_empty() {
        return Err(Error::Empty("cost sample"));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost sample"));
    }
    Ok(())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Monte Carlo entropic risk with a max-shifted log-sum-exp.
pub fn entropic_risk(costs: &[f64], sigma: f64) -> Result<f64> {
    check_costs(costs)?;
    validate_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(mean(costs));
    }
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = costs.iter().map(|c| (sigma * (c - max)).exp()).sum();
    Ok(max + (sum.ln() - (costs.len() as f64).ln()) / sigma)
}

/// Unnormalized weights `exp(σ·(J_j − max J))`: 1 at the largest cost and
/// exactly 1 everywhere when `σ = 0`.
pub fn risk_factors(costs: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0; costs.len()];
    }
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    costs.iter().map(|c| (sigma * (c - max)).exp()).collect()
}

/// Softmax weights `exp(σ J_j) / Σ_k exp(σ J_k)`.
pub fn risk_weights(costs: &[f64], sigma: f64) -> Vec<f64> {
    let factors = risk_factors(costs, sigma);
    let total: f64 = factors.iter().sum();
    factors.into_iter().map(|f| f / total).collect()
}

/// `Σ_j w_j ρ_j / Σ_j w_j`, accumulated in sample order.
///
/// Normalizing inside lets callers pass [`risk_factors`] directly; with
/// `σ = 0` the factors are all 1 and this reproduces [`mean_adjoint`]
/// bit for bit.
pub fn weighted_adjoint(weights: &[f64], adjoints: &[Vec4]) -> Result<Vec4> {
    if weights.len() != adjoints.len() {
        return Err(Error::DimensionMismatch {
            context: "risk weights",
            expected: adjoints.len(),
            actual: weights.len(),
        });
    }
    if adjoints.is_empty() {
        return Err(Error::Empty("adjoint sample"));
    }
    let mut acc = Vec4::zeros();
    let mut total = 0.0;
    for (w, rho) in weights.iter().zip(adjoints) {
        acc += rho * *w;
        total += w;
    }
    Ok(acc / total)
}

/// Plain sample mean of the adjoints, the risk-neutral estimator.
pub fn mean_adjoint(adjoints: &[Vec4]) -> Result<Vec4> {
    if adjoints.is_empty() {
        return Err(Error::Empty("adjoint sample"));
    }
    let mut acc = Vec4::zeros();
    for rho in adjoints {
        acc += rho;
    }
    Ok(acc / adjoints.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropic_risk_examples() {
        assert!((entropic_risk(&[3.5; 7], 2.0).unwrap() - 3.5).abs() < 1e-12);
        let expected = ((1.0 + 2f64.exp()) / 2.0).ln(); // 1.43379…
        assert!((entropic_risk(&[0.0, 2.0], 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.433_79).abs() < 1e-5);
        assert_eq!(entropic_risk(&[0.0, 2.0], 0.0).unwrap(), 1.0);
        assert!(matches!(entropic_risk(&[], 1.0), Err(Error::Empty(_))));
        assert!(entropic_risk(&[1.0], -1.0).is_err());
    }

    #[test]
    fn weights_examples() {
        assert!(risk_weights(&[1.0; 30], 0.0)
            .iter()
            .all(|w| *w == 1.0 / 30.0));
        let w = risk_weights(&[0.0, 2.0], 1.0);
        let e2 = 2f64.exp();
        assert!((w[0] - 1.0 / (1.0 + e2)).abs() < 1e-15);
        assert!((w[1] - e2 / (1.0 + e2)).abs() < 1e-15);
        assert!((w[0] - 0.119_20).abs() < 1e-5);
        let peaked = risk_weights(&[1.0, 5.0, 2.0], 100.0);
        assert!(peaked[1] > 1.0 - 1e-12);
    }

    #[test]
    fn weighted_adjoint_examples() {
        let rhos = [
            Vec4::new(1.0, 2.0, 3.0, 4.0),
            Vec4::new(-1.0, 0.0, 1.0, 2.0),
            Vec4::new(4.0, 4.0, 4.0, 4.0),
        ];
        let uniform = weighted_adjoint(&[1.0 / 3.0; 3], &rhos).unwrap();
        assert!((uniform - mean_adjoint(&rhos).unwrap()).norm() < 1e-14);
        let same = [rhos[0]; 3];
        assert_eq!(weighted_adjoint(&[0.2, 0.5, 0.3], &same).unwrap(), rhos[0]);
        assert_eq!(weighted_adjoint(&[0.0, 1.0, 0.0], &rhos).unwrap(), rhos[1]);
        assert!(weighted_adjoint(&[1.0], &rhos).is_err());
    }

    #[test]
    fn unit_factors_reproduce_the_plain_mean_bitwise() {
        let rhos: Vec<Vec4> = (0..30)
            .map(|j| {
                Vec4::new(
                    0.1 * j as f64,
                    (j as f64).sin(),
                    1.0 / (1.0 + j as f64),
                    -0.3,
                )
            })
            .collect();
        let costs: Vec<f64> = (0..30).map(|j| (j * 7 % 11) as f64).collect();
        assert_eq!(
            weighted_adjoint(&risk_factors(&costs, 0.0), &rhos).unwrap(),
            mean_adjoint(&rhos).unwrap()
        );
    }

    #[test]
    fn small_sigma_expansion() {
        // costs {0, 2}: closed form 10·ln((1 + e^0.2)/2) at σ = 0.1
        let costs = [0.0, 2.0];
        let r = entropic_risk(&costs, 0.1).unwrap();
        let exact = 10.0 * ((1.0 + 0.2f64.exp()) / 2.0).ln();
        assert!((r - exact).abs() < 1e-12, "{r}");
        assert!((r - 1.049_917).abs() < 1e-6, "{r}");
        let approx = |s: f64| mean(&costs) + 0.5 * s * variance(&costs);
        assert!((approx(0.1) - 1.05).abs() < 1e-15);
        let e1 = (entropic_risk(&costs, 0.1).unwrap() - approx(0.1)).abs();
        let e2 = (entropic_risk(&costs, 0.05).unwrap() - approx(0.05)).abs();
        assert!(e1 / e2 > 3.5, "{}", e1 / e2);
    }

    #[test]
    fn large_costs_stay_finite() {
        let costs: Vec<f64> = (0..30).map(|j| 1e4 - j as f64).collect();
        assert!(entropic_risk(&costs, 1.0).unwrap().is_finite());
        assert!(risk_weights(&costs, 1.0).iter().all(|w| w.is_finite()));
    }

    proptest! {
        #[test]
        fn risk_is_monotone_in_sigma_and_bounded_below_by_the_mean(
            costs in prop::collection::vec(0.0f64..50.0, 1..40),
            s1 in 0.0f64..2.0,
            ds in 0.0f64..2.0,
        ) {
            let r1 = entropic_risk(&costs, s1).unwrap();
            let r2 = entropic_risk(&costs, s1 + ds).unwrap();
            prop_assert!(r1 <= r2 + 1e-9 * (1.0 + r2.abs()));
            prop_assert!(r1 >= mean(&costs) - 1e-9 * (1.0 + r1.abs()));
        }

        #[test]
        fn translation_and_shift_invariance(
            costs in prop::collection::vec(0.0f64..50.0, 1..40),
            sigma in 0.0f64..2.0,
            c in -20.0f64..20.0,
        ) {
            let shifted: Vec<f64> = costs.iter().map(|x| x + c).collect();
            let r = entropic_risk(&costs, sigma).unwrap();
            let rs = entropic_risk(&shifted, sigma).unwrap();
            prop_assert!((rs - (r + c)).abs() <= 1e-9);
            // Bitwise weight invariance needs the shift to be exact in f64:
            // use integer-valued costs and shifts.
            let ints: Vec<f64> = costs.iter().map(|x| x.round()).collect();
            let ints_shifted: Vec<f64> = ints.iter().map(|x| x + c.round()).collect();
            prop_assert_eq!(risk_weights(&ints, sigma), risk_weights(&ints_shifted, sigma));
        }
    }
}
