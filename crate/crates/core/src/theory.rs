//! Closed-form second-order effects of binomial thinning.
//!
//! For a stationary count process `X` observed at rate `p`, the thinned
//! series `Y` satisfies
//!
//! ```text
//! Var(Y)            = p^2 Var(X) + p (1 - p) E[X]
//! Cov(Y_i, Y_j)     = p^2 Cov(X_i, X_j)            (i != j)
//! Cov(Y, S)         = p   Cov(X, S)                (external signal S)
//! ```
//!
//! so the lagged autocorrelation of `Y` is the ratio
//! `p^2 Cov / (p^2 Var + p (1 - p) E[X])`: thinning rescales the covariance
//! quadratically but adds a linear Bernoulli-noise floor on the diagonal,
//! which is what destroys autocorrelation at low rates.
//!
//! These operations take moment summaries rather than raw series, so the
//! same curves can be driven by analytic moments (synthetic studies) or by
//! plug-in estimates (empirical sweeps). Stationarity of the underlying
//! process is assumed exactly as in the derivation; for slowly drifting
//! data, the sweep harness's moving-window mode limits the damage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth moment summary feeding the thinning predictions: variance
/// and mean of `X`, the cross-covariance at the lag of interest, and the
/// sampling rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledCovariance {
    pub ground_variance: f64,
    pub ground_mean: f64,
    pub ground_cross: f64,
    pub rate: f64,
}

impl SampledCovariance {
    pub fn new(ground_variance: f64, ground_mean: f64, ground_cross: f64, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
            return Err(Error::InvalidRate { rate });
        }
        if ground_variance < 0.0 || !ground_variance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ground variance must be finite and >= 0, got {ground_variance}"
            )));
        }
        if ground_mean < 0.0 || !ground_mean.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ground mean must be finite and >= 0 for counts, got {ground_mean}"
            )));
        }
        if !ground_cross.is_finite() {
            return Err(Error::InvalidConfig(
                "ground cross-covariance must be finite".into(),
            ));
        }
        Ok(Self {
            ground_variance,
            ground_mean,
            ground_cross,
            rate,
        })
    }
}

/// `Var(Y) = p^2 Var(X) + p (1 - p) E[X]`.
pub fn sampled_variance(sc: &SampledCovariance) -> f64 {
    let p = sc.rate;
    p * p * sc.ground_variance + p * (1.0 - p) * sc.ground_mean
}

/// `Cov(Y_i, Y_j) = p^2 Cov(X_i, X_j)` for distinct time points.
pub fn sampled_cross_covariance(sc: &SampledCovariance) -> f64 {
    sc.rate * sc.rate * sc.ground_cross
}

/// Predicted lagged autocorrelation of the thinned series:
/// `p^2 Cov / (p^2 Var + p (1 - p) E[X])`.
///
/// Undefined at `p = 0` or for an all-zero signal (zero denominator).
pub fn predicted_autocorrelation(sc: &SampledCovariance) -> Result<f64> {
    let denom = sampled_variance(sc);
    if denom <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "predicted autocorrelation undefined: p^2 Var + p(1-p)E = {denom}"
        )));
    }
    Ok(sampled_cross_covariance(sc) / denom)
}

/// `Cov(Y, S) = p Cov(X, S)`: covariance with an external signal decays
/// linearly in the rate.
pub fn predicted_external_covariance(cov_xs: f64, rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
        return Err(Error::InvalidRate { rate });
    }
    Ok(rate * cov_xs)
}

/// Exact Pearson correlation between the thinned series and an external
/// signal: `p Cov(X,S) / (sigma_Y sigma_S)` with
/// `sigma_Y = sqrt(p^2 Var(X) + p (1-p) E[X])`.
///
/// No high-variance approximation is applied; the familiar limit
/// `rho_YS -> rho_XS` when `Var(X) >> E[X]` is a property of this exact
/// value, not a separate code path. `rho_xs` is used only to infer
/// `Cov(X,S) = rho_xs * sigma_X * sigma_S`, so the result is independent of
/// `sigma_s` scaling.
pub fn predicted_external_pearson(
    rho_xs: f64,
    sc: &SampledCovariance,
    sigma_s: f64,
) -> Result<f64> {
    if sigma_s <= 0.0 || !sigma_s.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "external signal sigma must be positive, got {sigma_s}"
        )));
    }
    let sigma_y = sampled_variance(sc).sqrt();
    if sigma_y <= 0.0 {
        return Err(Error::InvalidConfig(
            "thinned-series sigma is zero; correlation undefined".into(),
        ));
    }
    let cov_xs = rho_xs * sc.ground_variance.sqrt() * sigma_s;
    Ok(sc.rate * cov_xs / (sigma_y * sigma_s))
}

/// Derivative of the squared predicted autocorrelation with respect to the
/// rate. Writing `R(p)` for [`predicted_autocorrelation`] and cancelling
/// one factor of `p`, `R(p) = p Cov / (p Var + (1-p) E)`, and the quotient
/// rule collapses to
///
/// ```text
/// d/dp R^2(p) = 2 p Cov^2 E / (p Var + (1 - p) E)^3  >=  0
/// ```
///
/// whenever `E[X] > 0`: autocorrelation can only improve as the rate grows.
/// Exposed so tests can confront the sign claim with finite differences.
pub fn autocorrelation_squared_rate_derivative(sc: &SampledCovariance) -> Result<f64> {
    let p = sc.rate;
    if p <= 0.0 {
        return Err(Error::InvalidConfig(
            "derivative undefined at rate 0".into(),
        ));
    }
    let var = sc.ground_variance;
    let e = sc.ground_mean;
    let cov = sc.ground_cross;
    let denom = p * var + (1.0 - p) * e;
    if denom <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "derivative undefined: p Var + (1-p) E = {denom}"
        )));
    }
    // R^2(p) = p^2 Cov^2 / (p Var + (1-p) E)^2; quotient rule gives
    // d/dp R^2 = 2 p Cov^2 E / (p Var + (1-p) E)^3.
    Ok(2.0 * p * cov * cov * e / (denom * denom * denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sc(var: f64, mean: f64, cross: f64, rate: f64) -> SampledCovariance {
        SampledCovariance::new(var, mean, cross, rate).unwrap()
    }

    #[test]
    fn variance_recovers_ground_truth_at_full_rate() {
        assert_abs_diff_eq!(sampled_variance(&sc(4.0, 10.0, 2.0, 1.0)), 4.0);
        assert_abs_diff_eq!(sampled_variance(&sc(4.0, 10.0, 2.0, 0.0)), 0.0);
    }

    #[test]
    fn variance_hand_case() {
        // 0.25 * 4 + 0.5 * 0.5 * 10 = 3.5
        assert_abs_diff_eq!(sampled_variance(&sc(4.0, 10.0, 2.0, 0.5)), 3.5);
    }

    #[test]
    fn cross_covariance_scales_quadratically() {
        assert_abs_diff_eq!(sampled_cross_covariance(&sc(4.0, 10.0, 2.0, 1.0)), 2.0);
        assert_abs_diff_eq!(sampled_cross_covariance(&sc(4.0, 10.0, 2.0, 0.5)), 0.5);
    }

    #[test]
    fn autocorrelation_hand_case_and_full_rate() {
        // 0.5 / 3.5 = 1/7
        assert_abs_diff_eq!(
            predicted_autocorrelation(&sc(4.0, 10.0, 2.0, 0.5)).unwrap(),
            1.0 / 7.0,
            epsilon = 1e-15
        );
        // p = 1 recovers Cov/Var exactly.
        assert_abs_diff_eq!(
            predicted_autocorrelation(&sc(4.0, 10.0, 2.0, 1.0)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn autocorrelation_undefined_at_rate_zero() {
        assert!(predicted_autocorrelation(&sc(4.0, 10.0, 2.0, 0.0)).is_err());
    }

    #[test]
    fn external_covariance_is_linear_in_rate() {
        assert_abs_diff_eq!(predicted_external_covariance(6.0, 1.0).unwrap(), 6.0);
        assert_abs_diff_eq!(predicted_external_covariance(6.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            predicted_external_covariance(6.0, 1.0 / 3.0).unwrap(),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn external_pearson_recovers_rho_at_full_rate() {
        let v = predicted_external_pearson(0.8, &sc(25.0, 10.0, 0.0, 1.0), 3.0).unwrap();
        assert_abs_diff_eq!(v, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn external_pearson_high_variance_regime_preserves_correlation() {
        // Var(X) = 1e6 E[X]: sigma_Y ~ p sigma_X, so the p factors cancel.
        let mean = 50.0;
        let var = 1e6 * mean;
        let v = predicted_external_pearson(0.8, &sc(var, mean, 0.0, 0.1), 1.0).unwrap();
        assert!((v - 0.8).abs() / 0.8 < 0.01, "rho {v}");
    }

    #[test]
    fn external_pearson_poisson_regime_pinned_value() {
        // Var(X) = E[X] (Poisson-like): the exact ratio reduces to
        // rho * sqrt(p V / (p V + (1-p) V)) = rho * sqrt(p), giving
        // 0.8 * sqrt(0.1) = 0.252982212813470...
        let v = predicted_external_pearson(0.8, &sc(36.0, 36.0, 0.0, 0.1), 2.5).unwrap();
        assert_abs_diff_eq!(v, 0.252_982_212_813_470_2, epsilon = 1e-12);
        // And the drop from rho_XS is well beyond 20%.
        assert!(v < 0.8 * 0.8);
    }

    #[test]
    fn variance_never_below_quadratic_part() {
        for &p in &[0.1, 0.3, 0.7, 1.0] {
            let s = sc(9.0, 4.0, 1.0, p);
            assert!(sampled_variance(&s) >= p * p * 9.0 - 1e-15);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let cases = [
            (4.0, 10.0, 2.0, 0.5),
            (100.0, 3.0, -40.0, 0.25),
            (1.0, 1.0, 0.9, 0.9),
        ];
        for &(var, mean, cross, p) in &cases {
            let d = autocorrelation_squared_rate_derivative(&sc(var, mean, cross, p)).unwrap();
            let h = 1e-6;
            let r = |p: f64| {
                let v = predicted_autocorrelation(&sc(var, mean, cross, p)).unwrap();
                v * v
            };
            let fd = (r(p + h) - r(p - h)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6, "analytic {d} vs fd {fd}");
            assert!(d >= 0.0);
        }
    }
}
