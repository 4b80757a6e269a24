//! Welch's t-test, one-way ANOVA and the distribution tails they need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{ln_gamma, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WelchT,
    AnovaF,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::WelchT => "welch_t",
            TestKind::AnovaF => "anova_f",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult<T> {
    pub kind: TestKind,
    pub statistic: T,
    /// Welch–Satterthwaite df for t; between-groups df for F.
    pub df: T,
    /// Within-groups df for F.
    pub df2: Option<T>,
    pub p_value: T,
}

/// Regularised incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn incomplete_beta<T: Real>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let one = T::one();
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    if x < (a + one) / (a + b + T::of(2.0)) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        one - front * beta_continued_fraction(b, a, one - x) / b
    }
}

fn beta_continued_fraction<T: Real>(a: T, b: T, x: T) -> T {
    const MAX_ITER: usize = 10_000;
    let one = T::one();
    let two = T::of(2.0);
    let eps = T::epsilon();
    let tiny = T::tiny();
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = T::of_usize(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p<T: Real>(t: T, df: T) -> T {
    let half = T::of(0.5);
    let p = incomplete_beta(df * half, half, df / (df + t * t));
    p.max(T::zero()).min(T::one())
}

/// Upper tail probability of F(d1, d2).
pub fn f_upper_p<T: Real>(f: T, d1: T, d2: T) -> T {
    if f <= T::zero() {
        return T::one();
    }
    let half = T::of(0.5);
    let p = incomplete_beta(d2 * half, d1 * half, d2 / (d2 + d1 * f));
    p.max(T::zero()).min(T::one())
}

pub(crate) fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Unbiased sample variance.
pub(crate) fn variance<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(xs.len() - 1)
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t_test<T: Real>(a: &[T], b: &[T]) -> Result<TestResult<T>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::TooFewSamples(format!("welch t needs >= 2 per group, got {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (T::of_usize(a.len()), T::of_usize(b.len()));
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    let se2 = sa + sb;
    if se2 == T::zero() {
        if ma == mb {
            return Ok(TestResult { kind: TestKind::WelchT, statistic: T::zero(), df: na + nb - T::of(2.0), df2: None, p_value: T::one() });
        }
        return Err(Error::DegenerateVariance);
    }
    let t = (ma - mb) / se2.sqrt();
    let one = T::one();
    let df = se2 * se2 / (sa * sa / (na - one) + sb * sb / (nb - one));
    Ok(TestResult { kind: TestKind::WelchT, statistic: t, df, df2: None, p_value: t_two_sided_p(t, df) })
}

/// Classic fixed-effects one-way ANOVA.
pub fn one_way_anova<T: Real>(groups: &[&[T]]) -> Result<TestResult<T>> {
    if groups.len() < 2 {
        return Err(Error::TooFewSamples(format!("anova needs >= 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::TooFewSamples(format!("anova needs >= 2 samples per group, got {}", g.len())));
    }
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter().copied()).sum::<T>() / T::of_usize(n_total);
    let mut ss_between = T::zero();
    let mut ss_within = T::zero();
    for g in groups {
        let m = mean(g);
        ss_between += T::of_usize(g.len()) * (m - grand) * (m - grand);
        ss_within += g.iter().map(|&x| (x - m) * (x - m)).sum::<T>();
    }
    let df1 = T::of_usize(groups.len() - 1);
    let df2 = T::of_usize(n_total - groups.len());
    let all_identical = groups.iter().flat_map(|g| g.iter()).all(|&x| x == groups[0][0]);
    if all_identical {
        return Ok(TestResult { kind: TestKind::AnovaF, statistic: T::zero(), df: df1, df2: Some(df2), p_value: T::one() });
    }
    if ss_within == T::zero() {
        return Err(Error::DegenerateVariance);
    }
    let f = (ss_between / df1) / (ss_within / df2);
    Ok(TestResult { kind: TestKind::AnovaF, statistic: f, df: df1, df2: Some(df2), p_value: f_upper_p(f, df1, df2) })
}

/// Bonferroni adjustment for `m` simultaneous tests.
pub fn bonferroni<T: Real>(p: T, m: usize) -> T {
    (p * T::of_usize(m.max(1))).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_fixture() {
        let r = welch_t_test::<f64>(&[0.2, 0.3, 0.25], &[0.6, 0.7, 0.65]).unwrap();
        assert!((r.statistic - -9.798).abs() < 1e-3, "{}", r.statistic);
        assert!((r.df - 4.0).abs() < 1e-9);
        assert!(r.p_value > 0.0 && r.p_value < 0.001);
    }

    #[test]
    fn welch_equal_and_degenerate() {
        let a = [0.1, 0.4, 0.3];
        let r = welch_t_test::<f64>(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = welch_t_test::<f64>(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(matches!(welch_t_test::<f64>(&[0.5, 0.5], &[0.2, 0.2]), Err(Error::DegenerateVariance)));
        assert!(matches!(welch_t_test::<f64>(&[0.5], &[0.2, 0.3]), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn t_table_quantiles() {
        // two-sided critical values from standard t tables
        for (t, df, p) in [(2.776, 4.0, 0.05), (2.228, 10.0, 0.05), (3.169, 10.0, 0.01), (1.96, 1e6, 0.05), (12.706, 1.0, 0.05)] {
            let got = t_two_sided_p::<f64>(t, df);
            assert!((got - p).abs() < 0.002, "t={t} df={df}: {got}");
        }
    }

    #[test]
    fn f_table_quantiles() {
        // upper 5% points of F
        for (f, d1, d2) in [(7.71, 1.0, 4.0), (3.35, 2.0, 27.0), (2.87, 4.0, 20.0), (3.10, 3.0, 20.0)] {
            let got = f_upper_p::<f64>(f, d1, d2);
            assert!((got - 0.05).abs() < 0.002, "F({d1},{d2})={f}: {got}");
        }
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a, I_x(1, b) = 1 - (1-x)^b
        for x in [0.1, 0.37, 0.5, 0.93] {
            assert!((incomplete_beta::<f64>(1.0, 1.0, x) - x).abs() < 1e-12);
            assert!((incomplete_beta::<f64>(3.5, 1.0, x) - f64::powf(x, 3.5)).abs() < 1e-12);
            assert!((incomplete_beta::<f64>(1.0, 2.5, x) - (1.0 - f64::powf(1.0 - x, 2.5))).abs() < 1e-12);
        }
        assert_eq!(incomplete_beta::<f64>(2.0, 3.0, 0.0), 0.0);
        assert_eq!(incomplete_beta::<f64>(2.0, 3.0, 1.0), 1.0);
    }

    #[test]
    fn anova_fixtures() {
        let r = one_way_anova::<f64>(&[&[0.1, 0.2][..], &[0.8, 0.9][..]]).unwrap();
        // grand mean .5, SSb = 2(.35^2)*2 = .49, SSw = .01, F = .49 / (.01/2)
        assert!((r.statistic - 98.0).abs() < 1e-9, "{}", r.statistic);
        assert_eq!((r.df, r.df2), (1.0, Some(2.0)));
        let same = [0.3, 0.3];
        let r = one_way_anova::<f64>(&[&same[..], &same[..], &same[..]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(matches!(one_way_anova::<f64>(&[&[0.1, 0.1][..], &[0.2, 0.2][..]]), Err(Error::DegenerateVariance)));
        assert!(matches!(one_way_anova::<f64>(&[&[0.1, 0.2][..]]), Err(Error::TooFewSamples(_))));
        assert!(matches!(one_way_anova::<f64>(&[&[0.1, 0.2][..], &[0.3][..]]), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn works_in_f32() {
        let r = welch_t_test(&[0.2f32, 0.3, 0.25], &[0.6f32, 0.7, 0.65]).unwrap();
        assert!((r.statistic + 9.798).abs() < 1e-2);
        assert!((t_two_sided_p(2.776f32, 4.0) - 0.05).abs() < 0.002);
    }

    #[test]
    fn bonferroni_caps_at_one() {
        assert_eq!(bonferroni(0.01, 3), 0.03);
        assert_eq!(bonferroni(0.6, 3), 1.0);
    }
}
