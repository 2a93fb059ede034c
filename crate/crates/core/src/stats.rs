//! Small statistics toolkit: means, standard errors, KS tests, fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    /// `|estimate - target| <= k · std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.std_error
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            estimate: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Estimate {
        estimate: mean,
        std_error: se,
        n,
    }
}

/// Unbiased sample variance with a delta-method standard error
/// `sqrt((m4 - s⁴ (n-3)/(n-1)) / n)`.
pub fn variance_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n < 4 {
        return Estimate {
            estimate: f64::NAN,
            std_error: f64::INFINITY,
            n,
        };
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let var_of_var = (m4 - s2 * s2 * (nf - 3.0) / (nf - 1.0)) / nf;
    Estimate {
        estimate: s2,
        std_error: var_of_var.max(0.0).sqrt(),
        n,
    }
}

/// Delete-one jackknife of a statistic given as a function of the sample.
pub fn jackknife<F>(xs: &[f64], stat: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let n = xs.len();
    let full = stat(xs);
    if n < 2 {
        return Estimate {
            estimate: full,
            std_error: f64::INFINITY,
            n,
        };
    }
    let mut buf = Vec::with_capacity(n - 1);
    let leave_out: Vec<f64> = (0..n)
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&xs[..i]);
            buf.extend_from_slice(&xs[i + 1..]);
            stat(&buf)
        })
        .collect();
    let mbar = leave_out.iter().sum::<f64>() / n as f64;
    let var = leave_out.iter().map(|x| (x - mbar).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Estimate {
        estimate: full,
        std_error: var.sqrt(),
        n,
    }
}

/// Median of `groups` block means; robust against heavy tails.
pub fn median_of_means(xs: &[f64], groups: usize) -> f64 {
    let groups = groups.clamp(1, xs.len().max(1));
    let size = xs.len() / groups;
    if size == 0 {
        return f64::NAN;
    }
    let mut means: Vec<f64> = xs
        .chunks_exact(size)
        .take(groups)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let k = means.len();
    if k % 2 == 1 {
        means[k / 2]
    } else {
        0.5 * (means[k / 2 - 1] + means[k / 2])
    }
}

/// Asymptotic Kolmogorov tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
///
/// The p-value uses the finite-sample correction
/// `λ = (√n + 0.12 + 0.11/√n) D`.
pub fn ks_test<F>(samples: &[f64], cdf: F) -> KsResult
where
    F: Fn(f64) -> f64,
{
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sn = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d),
        n,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "fit needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewPoints {
            what: "linear fit",
            needed: 2,
            got: n,
        });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("fit abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
    })
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let e = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.estimate, 2.5);
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(mean_se(&[]).estimate.is_nan());
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs = [0.3, 1.9, -2.0, 4.4, 0.0, 7.1];
        let j = jackknife(&xs, |s| s.iter().sum::<f64>() / s.len() as f64);
        let m = mean_se(&xs);
        assert!((j.estimate - m.estimate).abs() < 1e-15);
        assert!((j.std_error - m.std_error).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert_eq!(kolmogorov_tail(0.0), 1.0);
        // classical 5% point
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
        assert!(kolmogorov_tail(3.0) < 1e-7);
    }

    #[test]
    fn ks_uniform_grid_is_tiny() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn fit_exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15);
        assert!((f.intercept - 1.0).abs() < 1e-15);
        assert!(f.slope_se < 1e-12);
        assert!(matches!(
            linear_fit(&[1.0], &[1.0]),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn simpson_integrates_exponential() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn median_of_means_ignores_one_outlier() {
        let mut xs = vec![1.0; 100];
        xs[0] = 1e12;
        assert_eq!(median_of_means(&xs, 10), 1.0);
    }

    #[test]
    fn variance_of_constant_shift() {
        let xs: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let v = variance_se(&xs);
        assert!((v.estimate - 0.25 * 100.0 / 99.0).abs() < 1e-12);
    }
}
