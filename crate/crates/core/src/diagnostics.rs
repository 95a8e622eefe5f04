//! Heteroskedasticity diagnostics: Engle's Lagrange-multiplier ARCH test
//! on forecast residuals, the chi-square tail function it needs, and the
//! conditional-variance proxy for partially observed autoregressive
//! counts.
//!
//! The motivating mechanism: thinning a count series makes the one-step
//! conditional variance proportional to the current (unobserved) level,
//! `Var(Y_t | X_t) = X_t·p(1−p)`, so the variance inherits the
//! autocorrelation of the level — an ARCH signature that the LM test
//! detects in the residuals of models fitted to thinned data.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::series::CountSeries;

/// Rejection threshold convention used by the reporting helpers.
pub const DEFAULT_ALPHA: f64 = 0.05;

// ---------------------------------------------------------------------------
// Chi-square survival function via the regularized incomplete gamma.
// ---------------------------------------------------------------------------

/// Lanczos coefficients (g = 7, 9 terms); relative error below 1e-13 for
/// positive arguments, far past the 1e-10 budget of the tail function.
/// Digits kept exactly as published so they can be diffed against the source
/// table, even where the trailing ones fall below f64 resolution.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for strictly positive arguments
/// (half-integer degrees of freedom land at >= 0.5, well inside the
/// accurate range).
fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) by series expansion;
/// converges fast for x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..500 {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by modified-Lentz continued
/// fraction; converges fast for x >= a + 1.
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Upper-tail probability of the chi-square distribution with `dof`
/// degrees of freedom: `Q(dof/2, x/2)`. Absolute error stays below 1e-10
/// across the argument range (series expansion below the `a + 1`
/// crossover, continued fraction above it).
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    debug_assert!(dof >= 1);
    if x <= 0.0 {
        return 1.0;
    }
    let a = dof as f64 / 2.0;
    let half_x = x / 2.0;
    let q = if half_x < a + 1.0 {
        1.0 - gamma_p_series(a, half_x)
    } else {
        gamma_q_continued_fraction(a, half_x)
    };
    q.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Engle's LM test.
// ---------------------------------------------------------------------------

/// One per-lag outcome of the LM test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArchLagRecord {
    pub lag: usize,
    pub lm: f64,
    pub p_value: f64,
}

/// Full ELM test output: one record per cumulative lag `1..=max_lag`.
/// `n_effective` is the regression sample at the deepest lag,
/// `n - max_lag`; shallower lags use proportionally more rows.
#[derive(Debug, Clone, Serialize)]
pub struct ArchTestResult {
    pub records: Vec<ArchLagRecord>,
    pub max_lag: usize,
    pub n_effective: usize,
}

impl ArchTestResult {
    /// Fraction of records with `lag` in `[lo, hi]` whose p-value falls
    /// below `alpha`.
    pub fn rejection_fraction(&self, alpha: f64, lo: usize, hi: usize) -> f64 {
        let in_range: Vec<&ArchLagRecord> = self
            .records
            .iter()
            .filter(|r| r.lag >= lo && r.lag <= hi)
            .collect();
        if in_range.is_empty() {
            return 0.0;
        }
        let hits = in_range.iter().filter(|r| r.p_value < alpha).count();
        hits as f64 / in_range.len() as f64
    }

    /// Writes `lag,lm,p_value` rows for the p-value-versus-lag plot.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lag,lm,p_value")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.lag, r.lm, r.p_value)?;
        }
        Ok(())
    }
}

/// Engle's LM test: for each lag `L` in `1..=max_lag`, regress the squared
/// residual on its own first `L` lags (plus intercept); under the no-ARCH
/// null the statistic `LM = (n − L)·R²` is asymptotically chi-square with
/// `L` degrees of freedom. Positive rescaling of the residuals leaves the
/// statistic invariant — exactly so for power-of-two factors.
pub fn elm_arch_test(residuals: &[f64], max_lag: usize) -> Result<ArchTestResult> {
    if max_lag == 0 {
        return Err(Error::InvalidConfig("max_lag must be >= 1".into()));
    }
    let n = residuals.len();
    if n < max_lag + 20 {
        return Err(Error::SeriesTooShort {
            len: n,
            required: max_lag + 20,
            what: format!("ELM test to lag {max_lag}"),
        });
    }
    let e2: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    let mean = e2.iter().sum::<f64>() / n as f64;
    if e2.iter().all(|v| (v - mean).abs() < 1e-12 * mean.max(1.0)) {
        return Err(Error::DegenerateTest);
    }
    // Normalize by the mean square. R² is unchanged (the regression family
    // is just reparameterized), but the statistic becomes scale-invariant
    // at the bit level for power-of-two rescalings of the residuals —
    // rescaled inputs normalize to identical vectors — and to rounding
    // error otherwise, instead of depending on pivot choices inside the
    // normal equations.
    let e2: Vec<f64> = e2.iter().map(|v| v / mean).collect();

    let mut records = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let rows = n - lag;
        let cols = lag + 1;
        let mut design = Vec::with_capacity(rows * cols);
        let mut y = Vec::with_capacity(rows);
        for t in lag..n {
            design.push(1.0);
            for j in 1..=lag {
                design.push(e2[t - j]);
            }
            y.push(e2[t]);
        }
        let beta = linalg::least_squares(&design, cols, &y)?;
        let mut fitted = vec![0.0_f64; rows];
        for (r, f) in fitted.iter_mut().enumerate() {
            for c in 0..cols {
                *f += design[r * cols + c] * beta[c];
            }
        }
        let r2 = linalg::r_squared(&y, &fitted).max(0.0);
        let lm = rows as f64 * r2;
        records.push(ArchLagRecord {
            lag,
            lm,
            p_value: chi_square_sf(lm, lag),
        });
    }
    Ok(ArchTestResult {
        records,
        max_lag,
        n_effective: n - max_lag,
    })
}

// ---------------------------------------------------------------------------
// Conditional-variance proxy.
// ---------------------------------------------------------------------------

/// Per-time conditional variance of the thinned value given the ground
/// truth: `v_t = x_t · p(1−p)`. Because this is a positive rescaling of
/// the level, the proxy inherits the level's autoregressive structure —
/// fitting an AR model to it recovers the original coefficients, and the
/// fit residuals estimate the scaled innovations `ε_t · p(1−p)`.
pub fn conditional_variance_proxy(series: &CountSeries, rate: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
        return Err(Error::InvalidRate { rate });
    }
    let scale = rate * (1.0 - rate);
    Ok(series.values().iter().map(|x| x * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::fit_ar;
    use crate::synth::{generate_arima, ArimaModel};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    #[test]
    fn sf_at_zero_is_one_for_every_dof() {
        for dof in 1..=10 {
            assert_eq!(chi_square_sf(0.0, dof), 1.0);
        }
    }

    #[test]
    fn sf_with_two_dof_matches_the_exponential_closed_form() {
        for x in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0] {
            assert_abs_diff_eq!(chi_square_sf(x, 2), (-x / 2.0).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sf_hits_the_classic_five_percent_quantile() {
        assert!((chi_square_sf(3.841, 1) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn sf_is_monotone_decreasing_in_x() {
        for dof in [1, 3, 7, 50] {
            let mut prev = 1.0;
            for i in 1..200 {
                let v = chi_square_sf(i as f64 * 0.5, dof);
                assert!(v <= prev, "dof {dof} x {}", i as f64 * 0.5);
                prev = v;
            }
        }
    }

    /// Chi-square density with closed-form gamma constants, so the
    /// quadrature oracle shares nothing with the Lanczos/series/continued-
    /// fraction implementation under test.
    fn pdf(t: f64, dof: usize) -> f64 {
        let a = dof as f64 / 2.0;
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let gamma_a = match dof {
            1 => sqrt_pi,
            2 => 1.0,
            3 => sqrt_pi / 2.0,
            5 => 0.75 * sqrt_pi,
            10 => 24.0,
            _ => unreachable!("oracle only covers pinned dofs"),
        };
        t.powf(a - 1.0) * (-t / 2.0).exp() / (2.0_f64.powf(a) * gamma_a)
    }

    // The recursion threads the three cached evaluations alongside the
    // interval, so the argument count is inherent to the algorithm.
    #[allow(clippy::too_many_arguments)]
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, fm: f64, eps: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let lm = (a + m) / 2.0;
        let rm = (m + b) / 2.0;
        let flm = f(lm);
        let frm = f(rm);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1)
                + simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1)
        }
    }

    fn cdf_by_quadrature(x: f64, dof: usize) -> f64 {
        if dof == 1 {
            // Substituting t = u^2 removes the endpoint singularity:
            // integrand becomes 2·exp(-u²/2)/sqrt(2π).
            let g = |u: f64| 2.0 * (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let b = x.sqrt();
            return simpson(&g, 0.0, b, g(0.0), g(b), g(b / 2.0), 1e-13, 40);
        }
        let g = |t: f64| pdf(t, dof);
        simpson(&g, 0.0, x, g(0.0), g(x), g(x / 2.0), 1e-13, 40)
    }

    #[test]
    fn sf_complements_the_quadrature_cdf() {
        // 100-point grid: 20 abscissae for each of five dof values.
        for dof in [1usize, 2, 3, 5, 10] {
            for i in 1..=20 {
                let x = i as f64 * (dof as f64 + 2.0) / 10.0;
                let total = chi_square_sf(x, dof) + cdf_by_quadrature(x, dof);
                assert!(
                    (total - 1.0).abs() < 1e-10,
                    "dof {dof} x {x}: sf+cdf = {total}"
                );
            }
        }
    }

    fn gaussian_residuals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn lm_statistic_is_exactly_scale_invariant() {
        // Scaling by 2 multiplies every float by an exact power of two, so
        // the mathematical scale invariance of R² holds bit-for-bit.
        let residuals = gaussian_residuals(500, 3);
        let scaled: Vec<f64> = residuals.iter().map(|r| r * 2.0).collect();
        let a = elm_arch_test(&residuals, 5).unwrap();
        let b = elm_arch_test(&scaled, 5).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.lm.to_bits(), rb.lm.to_bits());
            assert_eq!(ra.p_value.to_bits(), rb.p_value.to_bits());
        }
    }

    #[test]
    fn null_rejection_rate_is_calibrated() {
        let mut rejections = 0;
        for seed in 0..200 {
            let result = elm_arch_test(&gaussian_residuals(2000, seed), 5).unwrap();
            if result.records[4].p_value < DEFAULT_ALPHA {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 200.0;
        assert!(
            (0.02..=0.10).contains(&rate),
            "lag-5 null rejection rate {rate}"
        );
    }

    fn arch1_residuals(n: usize, seed: u64) -> Vec<f64> {
        // sigma²_t = 0.2 + 0.7·e²_{t-1}, started at the stationary variance.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 200;
        let mut e_prev_sq: f64 = 0.2 / 0.3;
        let mut out = Vec::with_capacity(n);
        for t in 0..burn + n {
            let sigma2 = 0.2 + 0.7 * e_prev_sq;
            let e = rng.sample::<f64, _>(StandardNormal) * sigma2.sqrt();
            e_prev_sq = e * e;
            if t >= burn {
                out.push(e);
            }
        }
        out
    }

    #[test]
    fn arch1_alternative_is_detected_with_high_power() {
        let mut rejections = 0;
        for seed in 0..200 {
            let result = elm_arch_test(&arch1_residuals(2000, 1000 + seed), 1).unwrap();
            if result.records[0].p_value < DEFAULT_ALPHA {
                rejections += 1;
            }
        }
        let power = rejections as f64 / 200.0;
        assert!(power >= 0.9, "lag-1 power {power}");
    }

    #[test]
    fn constant_residuals_are_degenerate() {
        assert!(matches!(
            elm_arch_test(&[1.0; 100], 3),
            Err(Error::DegenerateTest)
        ));
    }

    #[test]
    fn short_input_is_refused() {
        assert!(matches!(
            elm_arch_test(&[1.0, -1.0, 0.5], 2),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn variance_proxy_recovers_the_level_dynamics() {
        // v_t = x_t·p(1-p) is a positive rescaling of an AR(1) level, so
        // its fitted AR(1) coefficient matches the level's.
        let model = ArimaModel::new(vec![0.8], vec![], 1.0, 50.0, false).unwrap();
        let x = CountSeries::new("x", generate_arima(&model, 10_000, 1000, 9).unwrap()).unwrap();
        let proxy = conditional_variance_proxy(&x, 0.3).unwrap();
        let proxy_series = CountSeries::new("v", proxy).unwrap();
        let fit = fit_ar(&proxy_series, 1).unwrap();
        assert!((fit.ar[0] - 0.8).abs() < 0.05, "phi {}", fit.ar[0]);
    }

    #[test]
    fn variance_proxy_validates_the_rate() {
        let s = CountSeries::new("x", vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            conditional_variance_proxy(&s, 1.5),
            Err(Error::InvalidRate { .. })
        ));
    }

    #[test]
    fn arch_result_serializes_to_csv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 2.0).unwrap();
        let residuals: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let result = elm_arch_test(&residuals, 4).unwrap();
        let mut buf = Vec::new();
        result.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("lag,lm,p_value"));
    }
}
