//! Empirical moments, goodness-of-fit tests, correlation and power-law
//! fits.
//!
//! Every function sorts its input before reducing, so results are
//! bitwise invariant under permutation of the sample.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn test_error<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Test(msg.into()))
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return test_error("sample contains non-finite values");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Mean, variance and their standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mean_stderr: f64,
    /// Large-sample standard error of the variance, `sqrt((m4 - s^4) / n)`.
    pub variance_stderr: f64,
}

pub fn sample_moments(xs: &[f64]) -> Result<SampleMoments> {
    if xs.len() < 2 {
        return test_error("need at least two observations");
    }
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in &v {
        let d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    let (c2, c4) = (m2 / n, m4 / n);
    Ok(SampleMoments {
        count: v.len(),
        mean,
        variance,
        mean_stderr: (variance / n).sqrt(),
        variance_stderr: ((c4 - c2 * c2).max(0.0) / n).sqrt(),
    })
}

/// Pearson correlation of paired observations.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return test_error("correlation needs equally long samples of size >= 3");
    }
    if xs.iter().chain(ys).any(|x| !x.is_finite()) {
        return test_error("sample contains non-finite values");
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return test_error("correlation of a constant sample");
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    KsOneSample,
    KsTwoSample,
    ChiSquareGeometric,
}

/// Outcome of a goodness-of-fit test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    /// Parameters of the reference distribution.
    pub reference: BTreeMap<String, f64>,
}

/// Kolmogorov survival function `P(K > t)` of the limiting statistic.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // Jacobi-transformed series, accurate for small t
        let s = std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t);
        let c = (2.0 * std::f64::consts::PI).sqrt() / t;
        let mut cdf = 0.0;
        for j in 0..20 {
            let k = (2 * j + 1) as f64;
            cdf += (-k * k * s).exp();
        }
        return (1.0 - c * cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * t * t).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov distance `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return test_error("empty sample");
    }
    let v = sorted(sample)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// One-sample KS test against a continuous CDF with the asymptotic p-value.
pub fn ks_one_sample<F: Fn(f64) -> f64>(
    sample: &[f64],
    cdf: F,
    reference: BTreeMap<String, f64>,
) -> Result<TestReport> {
    let d = ks_statistic(sample, cdf)?;
    let n = sample.len();
    Ok(TestReport {
        kind: TestKind::KsOneSample,
        statistic: d,
        p_value: kolmogorov_sf((n as f64).sqrt() * d),
        sample_size: n,
        reference,
    })
}

/// KS test against `N(mean, variance)`.
pub fn ks_gaussian(sample: &[f64], mean: f64, variance: f64) -> Result<TestReport> {
    if sample.len() < 50 {
        return test_error(format!("KS test needs at least 50 observations, got {}", sample.len()));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return test_error(format!("reference variance must be positive, got {variance}"));
    }
    let first = sample[0];
    if sample.iter().all(|&x| x == first) {
        return test_error("degenerate sample: all observations equal");
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::Test(e.to_string()))?;
    let reference = BTreeMap::from([("mean".to_string(), mean), ("variance".to_string(), variance)]);
    ks_one_sample(sample, |x| normal.cdf(x), reference)
}

/// Two-sample KS test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return test_error("two-sample KS test needs two nonempty samples");
    }
    let (va, vb) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (va.len() as f64, vb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < va.len() && j < vb.len() {
        let x = va[i].min(vb[j]);
        while i < va.len() && va[i] <= x {
            i += 1;
        }
        while j < vb.len() && vb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(TestReport {
        kind: TestKind::KsTwoSample,
        statistic: d,
        p_value: kolmogorov_sf(en * d),
        sample_size: va.len() + vb.len(),
        reference: BTreeMap::from([("size_a".to_string(), na), ("size_b".to_string(), nb)]),
    })
}

/// Chi-square test of a histogram on `k >= 1` (`hist[k]` counts value `k`)
/// against `P(N = k) = pi^{k-1} (1 - pi)`.
///
/// Bins are kept while their expected count is at least 5; the remaining
/// tail is pooled into one bin.
pub fn chi2_geometric(hist: &[u64], failure_prob: f64) -> Result<TestReport> {
    if !(failure_prob > 0.0 && failure_prob < 1.0) {
        return test_error(format!("failure probability must lie in (0, 1), got {failure_prob}"));
    }
    if hist.first().copied().unwrap_or(0) > 0 {
        return test_error("histogram has mass at 0, outside the support k >= 1");
    }
    let total: u64 = hist.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut bins = 0;
    let mut k = 1;
    let mut tail_obs = total;
    loop {
        let tail_exp = n * failure_prob.powi(k as i32 - 1);
        let e = tail_exp * (1.0 - failure_prob);
        let next_tail = tail_exp - e;
        // close with the tail when splitting would leave an undersized bin
        if e < 5.0 || next_tail < 5.0 {
            let o = tail_obs as f64;
            stat += (o - tail_exp) * (o - tail_exp) / tail_exp;
            bins += 1;
            break;
        }
        let o = hist.get(k).copied().unwrap_or(0);
        stat += (o as f64 - e) * (o as f64 - e) / e;
        tail_obs -= o;
        bins += 1;
        k += 1;
    }
    if bins < 2 {
        return test_error(format!("insufficient counts for a chi-square test ({total} observations)"));
    }
    let dof = (bins - 1) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::Test(e.to_string()))?;
    Ok(TestReport {
        kind: TestKind::ChiSquareGeometric,
        statistic: stat,
        p_value: chi.sf(stat),
        sample_size: total as usize,
        reference: BTreeMap::from([
            ("failure_prob".to_string(), failure_prob),
            ("dof".to_string(), dof),
        ]),
    })
}

/// Correlation and median-split comparison of a statistic against a
/// conditioning variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub corr: f64,
    pub split_ks: TestReport,
    pub median: f64,
}

/// Pearson correlation of `g` with `w`, and the two-sample KS test of `g`
/// split at the median of `w`.
pub fn mixing_proxy(g: &[f64], w: &[f64]) -> Result<MixingReport> {
    if g.len() != w.len() {
        return test_error("paired samples must have equal length");
    }
    let corr = pearson(g, w)?;
    let ws = sorted(w)?;
    let m = ws.len();
    let median = if m % 2 == 1 { ws[m / 2] } else { 0.5 * (ws[m / 2 - 1] + ws[m / 2]) };
    let (mut low, mut high) = (Vec::new(), Vec::new());
    for (&gi, &wi) in g.iter().zip(w) {
        if wi <= median {
            low.push(gi);
        } else {
            high.push(gi);
        }
    }
    if low.is_empty() || high.is_empty() {
        return test_error("degenerate median split");
    }
    Ok(MixingReport {
        corr,
        split_ks: ks_two_sample(&low, &high)?,
        median,
    })
}

/// Weighted least-squares line `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits a line with weights `1 / sy^2`; if every `sy` is zero the fit is
/// unweighted and the slope error comes from the residuals.
pub fn line_fit(x: &[f64], y: &[f64], sy: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != sy.len() {
        return test_error("fit inputs must have equal length");
    }
    if x.len() < 3 {
        return test_error(format!("slope fit needs at least 3 points, got {}", x.len()));
    }
    let weighted = sy.iter().all(|&s| s > 0.0);
    let w: Vec<f64> = sy.iter().map(|&s| if weighted { 1.0 / (s * s) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return test_error("slope fit needs at least two distinct abscissae");
    }
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_err = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (x.len() as f64 - 2.0) / sxx).sqrt()
    };
    Ok(LineFit {
        slope,
        slope_err,
        intercept,
        points: x.len(),
    })
}

/// Slope of `ln value` against `ln k`, weighting by the relative errors.
pub fn loglog_slope(points: &[(f64, f64, f64)]) -> Result<LineFit> {
    if points.iter().any(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive abscissae and values".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sy: Vec<f64> = points.iter().map(|p| p.2 / p.1).collect();
    line_fit(&x, &y, &sy)
}

/// Slope of `ln value` against `k`.
pub fn loglinear_slope(points: &[(f64, f64, f64)]) -> Result<LineFit> {
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::Domain("log-linear fit needs positive values".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sy: Vec<f64> = points.iter().map(|p| p.2 / p.1).collect();
    line_fit(&x, &y, &sy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect()
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the limiting distribution
        assert_relative_eq!(kolmogorov_sf(1.3580986393), 0.05, epsilon = 1e-6);
        assert_relative_eq!(kolmogorov_sf(1.6276236115), 0.01, epsilon = 1e-6);
        assert_relative_eq!(kolmogorov_sf(0.5), 0.963945243, epsilon = 1e-6);
        assert_relative_eq!(kolmogorov_sf(0.99), 1.0 - 0.719_566_4, epsilon = 1e-3);
        // both branches agree at the switch
        assert_relative_eq!(kolmogorov_sf(1.0 - 1e-12), kolmogorov_sf(1.0), epsilon = 1e-9);
    }

    #[test]
    fn ks_statistic_small_samples_have_exact_laws() {
        // n = 1: D = max(F, 1 - F), so P(D <= t) = 2t - 1 on [1/2, 1]
        assert_eq!(ks_statistic(&[0.3], |x| x).unwrap(), 0.7);
        // n = 2: P(D <= t) = 2(2t - 1/2)^2 on [1/4, 1/2], 1 - 2(1 - t)^2 on [1/2, 1]
        assert_relative_eq!(ks_statistic(&[0.6, 0.2], |x| x).unwrap(), 0.4, epsilon = 1e-15);
        let mut rng = SplitMix64::new(17);
        let m = 200_000;
        let (mut d1, mut d2) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for _ in 0..m {
            d1.push(ks_statistic(&[rng.uniform()], |x| x).unwrap());
            d2.push(ks_statistic(&[rng.uniform(), rng.uniform()], |x| x).unwrap());
        }
        let f1 = |t: f64| (2.0 * t - 1.0).clamp(0.0, 1.0);
        let f2 = |t: f64| {
            if t <= 0.25 {
                0.0
            } else if t <= 0.5 {
                2.0 * (2.0 * t - 0.5).powi(2)
            } else {
                (1.0 - 2.0 * (1.0 - t).powi(2)).min(1.0)
            }
        };
        let r1 = ks_one_sample(&d1, f1, BTreeMap::new()).unwrap();
        let r2 = ks_one_sample(&d2, f2, BTreeMap::new()).unwrap();
        assert!(r1.p_value > 0.001 && r2.p_value > 0.001, "{r1:?} {r2:?}");
    }

    #[test]
    fn ks_gaussian_size_and_power() {
        let xs = normals(1, 10_000, 0.0);
        assert!(ks_gaussian(&xs, 0.0, 1.0).unwrap().p_value > 0.001);
        assert!(ks_gaussian(&xs, 0.5, 1.0).unwrap().p_value < 1e-6);
        assert!(ks_gaussian(&[2.0; 100], 0.0, 1.0).is_err());
        assert!(ks_gaussian(&xs[..10], 0.0, 1.0).is_err());
    }

    #[test]
    fn two_sample_ks_detects_shift() {
        let a = normals(2, 5_000, 0.0);
        let b = normals(3, 5_000, 0.0);
        let c = normals(4, 5_000, 0.2);
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.001);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
    }

    fn geometric_hist(seed: u64, n: usize, pi: f64, shift: usize) -> Vec<u64> {
        let mut rng = SplitMix64::new(seed);
        let mut hist = vec![0u64; 64];
        for _ in 0..n {
            let mut k = 1;
            while rng.uniform() < pi {
                k += 1;
            }
            hist[(k + shift).min(63)] += 1;
        }
        hist
    }

    #[test]
    fn chi2_geometric_size_and_power() {
        let good = geometric_hist(5, 1_000_000, 0.34, 0);
        let r = chi2_geometric(&good, 0.34).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
        let shifted = geometric_hist(6, 1_000_000, 0.34, 1);
        assert!(chi2_geometric(&shifted, 0.34).unwrap().p_value < 1e-6);
        assert!(chi2_geometric(&[0, 3], 0.34).is_err());
        assert!(chi2_geometric(&[1, 3], 0.34).is_err());
    }

    #[test]
    fn mixing_proxy_size_and_power() {
        let g = normals(7, 10_000, 0.0);
        let w = normals(8, 10_000, 1.0);
        let r = mixing_proxy(&g, &w).unwrap();
        assert!(r.corr.abs() < 3.0 / 100.0);
        let dep = mixing_proxy(&w, &w).unwrap();
        assert!(dep.split_ks.p_value < 1e-6);
        assert!(mixing_proxy(&g, &vec![1.0; 10_000]).is_err());
    }

    #[test]
    fn permutation_invariance() {
        let xs = normals(9, 2_000, 0.0);
        let ys = normals(10, 2_000, 0.0);
        let mut rev_x = xs.clone();
        rev_x.reverse();
        let mut rev_y = ys.clone();
        rev_y.reverse();
        assert_eq!(sample_moments(&xs).unwrap(), sample_moments(&rev_x).unwrap());
        assert_eq!(pearson(&xs, &ys).unwrap(), pearson(&rev_x, &rev_y).unwrap());
        assert_eq!(ks_gaussian(&xs, 0.0, 1.0).unwrap(), ks_gaussian(&rev_x, 0.0, 1.0).unwrap());
        assert_eq!(mixing_proxy(&xs, &ys).unwrap(), mixing_proxy(&rev_x, &rev_y).unwrap());
    }

    #[test]
    fn exact_power_laws() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0].iter().map(|&k: &f64| (k, k.powi(-3), 0.0)).collect();
        let fit = loglog_slope(&pts).unwrap();
        assert_relative_eq!(fit.slope, -3.0, epsilon = 1e-12);
        let flat: Vec<_> = [1.0, 3.0, 9.0].iter().map(|&k| (k, 2.5, 0.0)).collect();
        assert_eq!(loglog_slope(&flat).unwrap().slope, 0.0);
        assert!(loglog_slope(&[(1.0, 1.0, 0.0), (2.0, 0.0, 0.0), (3.0, 1.0, 0.0)]).is_err());
        assert!(loglog_slope(&pts[..2]).is_err());
    }

    #[test]
    fn variance_stderr_matches_gaussian_theory() {
        let xs = normals(11, 100_000, 0.0);
        let m = sample_moments(&xs).unwrap();
        assert!((m.variance - 1.0).abs() < 3.0 * m.variance_stderr);
        assert_relative_eq!(m.variance_stderr, (2.0f64 / 100_000.0).sqrt(), max_relative = 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn slope_fit_recovers_planted_exponents(exponent in -3.0f64..0.0, seed in 0u64..1000) {
            let mut rng = SplitMix64::new(seed);
            let rel = 0.01;
            let pts: Vec<_> = (0..8)
                .map(|i| {
                    let k = 4.0 * 2f64.powi(i);
                    let noise: f64 = rng.sample(StandardNormal);
                    let v = k.powf(exponent) * (1.0 + rel * noise);
                    (k, v, rel * k.powf(exponent))
                })
                .collect();
            let fit = loglog_slope(&pts).unwrap();
            prop_assert!((fit.slope - exponent).abs() < 5.0 * fit.slope_err,
                "slope {} vs {} (err {})", fit.slope, exponent, fit.slope_err);
        }
    }
}
