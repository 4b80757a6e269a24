//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for probabilities, statistics and divergences: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; always succeeds for finite inputs.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 is representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon scaled for iterative special-function evaluation.
    fn tiny() -> Self {
        Self::min_positive_value() * Self::of(1e3)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), valid for x > 0.
pub fn ln_gamma<T: Real>(x: T) -> T {
    const COEF: [f64; 9] = [
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
    let xf = x.to_f64_lossy();
    if xf < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        let v = (pi / (pi * xf).sin()).abs().ln() - ln_gamma(1.0 - xf);
        return T::of(v);
    }
    let z = xf - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    let v = 0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln();
    T::of(v)
}

/// Shortest round-trip decimal text for a scalar.
pub fn fmt_shortest<T: Real>(x: T) -> String {
    format!("{}", x)
}

/// Decimal text rounded to `digits` significant digits, printed in shortest form.
pub fn fmt_significant<T: Real>(x: T, digits: usize) -> String {
    let xf = x.to_f64_lossy();
    if xf == 0.0 || !xf.is_finite() {
        return format!("{}", xf);
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), xf)
        .parse()
        .expect("scientific notation parses");
    format!("{}", rounded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20usize {
            fact *= n as f64;
            let lg: f64 = ln_gamma((n + 1) as f64);
            assert!((lg - fact.ln()).abs() < 1e-11, "n={n}");
        }
        let half: f64 = ln_gamma(0.5);
        assert!((half - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        let small: f32 = ln_gamma(3.0f32);
        assert!((small - 2.0f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_significant(0.738_095_238_095_238_1f64, 12), "0.738095238095");
        assert_eq!(fmt_significant(1.0f64, 12), "1");
        assert_eq!(fmt_significant(0.0f64, 12), "0");
        assert_eq!(fmt_shortest(0.1f64), "0.1");
    }
}
