//! Small statistics helpers shared by the oracle, the harness and the tests.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Upper `p` quantile helper: the `t` with `P(T <= t) = p` for `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if df.is_infinite() || df > 1e7 {
        let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
        return normal.inverse_cdf(p);
    }
    StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom").inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

/// Two-sided t-interval for the mean at confidence `1 - alpha`.
pub fn t_interval(xs: &[f64], alpha: f64) -> Interval {
    let m = mean(xs);
    let se = std_error(xs);
    if xs.len() < 2 || se == 0.0 {
        return Interval { mean: m, low: m, high: m };
    }
    let half = t_quantile(1.0 - alpha / 2.0, (xs.len() - 1) as f64) * se;
    Interval { mean: m, low: m - half, high: m + half }
}

/// Welch's unequal-variance comparison of two sample means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub difference: f64,
    pub std_error: f64,
    pub df: f64,
    pub t: f64,
    /// One-sided p-value for `mean(a) > mean(b)`.
    pub p_greater: f64,
}

impl WelchTest {
    /// Lower end of the one-sided `1 - alpha` confidence bound on `mean(a) - mean(b)`.
    pub fn lower_bound(&self, alpha: f64) -> f64 {
        if self.std_error == 0.0 {
            return self.difference;
        }
        self.difference - t_quantile(1.0 - alpha, self.df) * self.std_error
    }
}

pub fn welch(a: &[f64], b: &[f64]) -> WelchTest {
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let difference = mean(a) - mean(b);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        let p = if difference > 0.0 { 0.0 } else { 1.0 };
        return WelchTest { difference, std_error: 0.0, df: f64::INFINITY, t: f64::NAN, p_greater: p };
    }
    let df =
        (va + vb).powi(2) / (va * va / (a.len() as f64 - 1.0).max(1.0) + vb * vb / (b.len() as f64 - 1.0).max(1.0));
    let t = difference / se;
    let p_greater = 1.0 - StudentsT::new(0.0, 1.0, df).expect("valid df").cdf(t);
    WelchTest { difference, std_error: se, df, t, p_greater }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((std_error(&xs) - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn t_quantiles() {
        assert!((t_quantile(0.975, 10.0) - 2.228_138_85).abs() < 1e-6);
        assert!((t_quantile(0.975, 1e9) - 1.959_963_98).abs() < 1e-6);
    }

    #[test]
    fn welch_detects_a_clear_gap() {
        let a = [10.0, 11.0, 12.0, 10.5, 11.5];
        let b = [1.0, 2.0, 1.5, 2.5, 1.2];
        let w = welch(&a, &b);
        assert!(w.p_greater < 1e-5);
        assert!(w.lower_bound(0.05) > 0.0);
        assert!(welch(&b, &a).p_greater > 0.99);
    }
}
