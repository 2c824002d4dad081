//! Estimators and curve fits used on protocol outputs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{NetsimError, TrialRecord};

/// Minimum number of waiting times accepted by the rate fit.
pub const MIN_RATE_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

/// Frequency estimate `k/n` with the standard deviation of the Beta(k+1, n-k+1)
/// posterior, which stays positive at `k = 0` and `k = n`.
pub fn binomial_estimate(k: u64, n: u64) -> Estimate {
    let (k, n) = (k as f64, n as f64);
    let value = if n > 0.0 { k / n } else { f64::NAN };
    let var = (k + 1.0) * (n - k + 1.0) / ((n + 2.0).powi(2) * (n + 3.0));
    Estimate {
        value,
        uncertainty: var.sqrt(),
    }
}

/// Parity `(even - odd) / n` from the count of even outcomes.
pub fn parity_estimate(even: u64, n: u64) -> Estimate {
    let p = binomial_estimate(even, n);
    Estimate {
        value: 2.0 * p.value - 1.0,
        uncertainty: 2.0 * p.uncertainty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against `1 - exp(-rate t)`.
pub fn ks_test_exponential(samples: &[f64], rate: f64) -> KsResult {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cdf = 1.0 - (-rate * t).exp();
            (cdf - i as f64 / n).max((i as f64 + 1.0) / n - cdf)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub std_err: f64,
    pub samples: usize,
    /// Goodness of fit against the fitted exponential.
    pub ks: KsResult,
}

/// Maximum-likelihood exponential rate of the trial wall times.
pub fn fit_rate(records: &[TrialRecord]) -> Result<RateFit, NetsimError> {
    let times: Vec<f64> = records.iter().map(|r| r.wall_time_s).collect();
    fit_rate_times(&times)
}

pub fn fit_rate_times(times: &[f64]) -> Result<RateFit, NetsimError> {
    if times.len() < MIN_RATE_SAMPLES {
        return Err(NetsimError::InsufficientData {
            needed: MIN_RATE_SAMPLES,
            got: times.len(),
        });
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(NetsimError::DegenerateFit("wall times must be finite and non-negative".into()));
    }
    let n = times.len() as f64;
    let total: f64 = times.iter().sum();
    if total <= 0.0 {
        return Err(NetsimError::DegenerateFit("all wall times are zero".into()));
    }
    let rate = n / total;
    let ks = ks_test_exponential(times, rate);
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    if hi - lo <= 1e-12 * hi || ks.p_value < 1e-6 {
        return Err(NetsimError::DegenerateFit(format!(
            "wall times are not exponential (KS D = {:.3}, p = {:.1e})",
            ks.statistic, ks.p_value
        )));
    }
    Ok(RateFit {
        rate,
        std_err: rate / n.sqrt(),
        samples: times.len(),
        ks,
    })
}

/// Parameters of `y = amplitude cos(frequency x + phase) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosineFit {
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub phase: f64,
    pub phase_err: f64,
    pub offset: f64,
    pub offset_err: f64,
}

fn check_lengths(x: &[f64], y: &[f64], sigma: Option<&[f64]>, min: usize) -> Result<(), NetsimError> {
    if x.len() != y.len() || sigma.is_some_and(|s| s.len() != x.len()) {
        return Err(NetsimError::DegenerateFit("mismatched data lengths".into()));
    }
    if x.len() < min {
        return Err(NetsimError::InsufficientData { needed: min, got: x.len() });
    }
    if sigma.is_some_and(|s| s.iter().any(|v| !(*v > 0.0))) {
        return Err(NetsimError::DegenerateFit("uncertainties must be positive".into()));
    }
    Ok(())
}

/// Weighted linear least squares; returns coefficients and their covariance.
/// Without `sigma` the covariance is scaled by the residual variance.
fn linear_lsq(
    design: &DMatrix<f64>,
    y: &[f64],
    sigma: Option<&[f64]>,
) -> Result<(DVector<f64>, DMatrix<f64>), NetsimError> {
    let (n, k) = design.shape();
    let w = DVector::from_iterator(n, (0..n).map(|i| sigma.map_or(1.0, |s| 1.0 / s[i])));
    let a = DMatrix::from_fn(n, k, |i, j| design[(i, j)] * w[i]);
    let b = DVector::from_iterator(n, (0..n).map(|i| y[i] * w[i]));
    let normal = a.transpose() * &a;
    let cov = normal
        .try_inverse()
        .ok_or_else(|| NetsimError::DegenerateFit("singular design matrix".into()))?;
    let coef = &cov * a.transpose() * &b;
    let cov = if sigma.is_some() {
        cov
    } else {
        let resid = &b - &a * &coef;
        let dof = (n - k).max(1) as f64;
        cov * (resid.norm_squared() / dof)
    };
    Ok((coef, cov))
}

/// Fits `y = A cos(f x + phase) + c` at known angular frequency `f`.
pub fn fit_cosine(x: &[f64], y: &[f64], sigma: Option<&[f64]>, frequency: f64) -> Result<CosineFit, NetsimError> {
    check_lengths(x, y, sigma, 3)?;
    let design = DMatrix::from_fn(x.len(), 3, |i, j| match j {
        0 => (frequency * x[i]).cos(),
        1 => (frequency * x[i]).sin(),
        _ => 1.0,
    });
    let (c, cov) = linear_lsq(&design, y, sigma)?;
    // A cos(fx + p) = A cos p cos fx - A sin p sin fx
    let (a, b) = (c[0], c[1]);
    let amplitude = a.hypot(b);
    let phase = (-b).atan2(a);
    let (ca, cb, cab) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let (amplitude_err, phase_err) = if amplitude > 0.0 {
        let r2 = amplitude * amplitude;
        (
            ((a * a * ca + b * b * cb + 2.0 * a * b * cab) / r2).max(0.0).sqrt(),
            ((b * b * ca + a * a * cb - 2.0 * a * b * cab) / (r2 * r2)).max(0.0).sqrt(),
        )
    } else {
        (ca.max(cb).sqrt(), f64::INFINITY)
    };
    Ok(CosineFit {
        amplitude,
        amplitude_err,
        phase,
        phase_err,
        offset: c[2],
        offset_err: cov[(2, 2)].max(0.0).sqrt(),
    })
}

/// Parameters of `y = amplitude exp(-x / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub tau: f64,
    pub tau_err: f64,
}

/// Least-squares exponential decay fit, started from a log-linear fit of the
/// positive points and refined by Gauss-Newton.
pub fn fit_exponential_decay(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<DecayFit, NetsimError> {
    check_lengths(x, y, sigma, 3)?;
    let pos: Vec<usize> = (0..x.len()).filter(|&i| y[i] > 0.0).collect();
    if pos.len() < 2 {
        return Err(NetsimError::DegenerateFit("decay needs positive samples".into()));
    }
    let design = DMatrix::from_fn(pos.len(), 2, |i, j| if j == 0 { 1.0 } else { x[pos[i]] });
    let logs: Vec<f64> = pos.iter().map(|&i| y[i].ln()).collect();
    let (c, _) = linear_lsq(&design, &logs, None)?;
    if !(c[1] < 0.0) {
        return Err(NetsimError::DegenerateFit("data do not decay".into()));
    }
    let mut amp = c[0].exp();
    let mut rate = -c[1];
    let n = x.len();
    let mut cov = DMatrix::zeros(2, 2);
    for _ in 0..100 {
        let jac = DMatrix::from_fn(n, 2, |i, j| {
            let e = (-rate * x[i]).exp();
            if j == 0 {
                e
            } else {
                -amp * x[i] * e
            }
        });
        let resid: Vec<f64> = (0..n).map(|i| y[i] - amp * (-rate * x[i]).exp()).collect();
        let (step, c) = linear_lsq(&jac, &resid, sigma)?;
        cov = c;
        amp += step[0];
        rate += step[1];
        if !(rate > 0.0 && amp.is_finite()) {
            return Err(NetsimError::DegenerateFit("decay fit diverged".into()));
        }
        if step[0].abs() <= 1e-14 * amp.abs() && step[1].abs() <= 1e-14 * rate {
            break;
        }
    }
    let tau = 1.0 / rate;
    Ok(DecayFit {
        amplitude: amp,
        amplitude_err: cov[(0, 0)].max(0.0).sqrt(),
        tau,
        tau_err: cov[(1, 1)].max(0.0).sqrt() * tau * tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exponential(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() / rate).collect()
    }

    #[test]
    fn rate_recovered_across_scales() {
        for (i, rate) in [0.1, 4.5, 10.0, 1000.0].into_iter().enumerate() {
            let fit = fit_rate_times(&exponential(rate, 20_000, i as u64)).unwrap();
            assert!((fit.rate - rate).abs() < 3.0 * fit.std_err, "{rate}: {fit:?}");
            assert!(fit.ks.p_value > 0.01);
        }
    }

    #[test]
    fn degenerate_rate_inputs() {
        assert!(matches!(
            fit_rate_times(&[0.2; 500]),
            Err(NetsimError::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_rate_times(&[0.2; 50]),
            Err(NetsimError::InsufficientData { .. })
        ));
        // Uniform times are far from exponential.
        let uniform: Vec<f64> = (0..2000).map(|i| 1.0 + i as f64 * 1e-4).collect();
        assert!(fit_rate_times(&uniform).is_err());
    }

    #[test]
    fn ks_detects_wrong_rate() {
        let x = exponential(4.5, 100_000, 9);
        assert!(ks_test_exponential(&x, 4.5).p_value > 0.01);
        assert!(ks_test_exponential(&x, 4.8).p_value < 0.01);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Standard critical values of the asymptotic distribution.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn cosine_fit_exact_data() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * std::f64::consts::PI / 12.0).collect();
        let y: Vec<f64> = x.iter().map(|&t| 0.7 * (2.0 * t - 0.4).cos() + 0.05).collect();
        let f = fit_cosine(&x, &y, None, 2.0).unwrap();
        assert!((f.amplitude - 0.7).abs() < 1e-12);
        assert!((f.phase + 0.4).abs() < 1e-12);
        assert!((f.offset - 0.05).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_exact_data() {
        let x: Vec<f64> = (0..31).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&t| 0.9 * (-t / 1.12).exp()).collect();
        let f = fit_exponential_decay(&x, &y, None).unwrap();
        assert!((f.tau - 1.12).abs() < 1e-9);
        assert!((f.amplitude - 0.9).abs() < 1e-9);
        assert!(fit_exponential_decay(&x, &vec![0.5; 31], None).is_err());
    }

    #[test]
    fn estimates_have_positive_uncertainty() {
        let e = binomial_estimate(0, 100);
        assert_eq!(e.value, 0.0);
        assert!(e.uncertainty > 0.0);
        let p = parity_estimate(100, 100);
        assert_eq!(p.value, 1.0);
        assert!(p.uncertainty > 0.0);
    }
}
