//! Signed log-magnitude scalars.
//!
//! Partition functions such as `(√2)^{ℓL}` leave the `f64` range long before
//! the lattices of interest do, so every partition-function value in this
//! crate is carried as `sign · exp(log_abs)`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul, Neg};

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `sign · exp(log_abs)`; `log_abs` is meaningless when `sign == 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogNumber {
    pub sign: i8,
    pub log_abs: f64,
}

impl LogNumber {
    pub const ZERO: LogNumber = LogNumber { sign: 0, log_abs: f64::NEG_INFINITY };
    pub const ONE: LogNumber = LogNumber { sign: 1, log_abs: 0.0 };

    pub fn new(sign: i8, log_abs: f64) -> Self {
        if sign == 0 || log_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            LogNumber { sign: sign.signum(), log_abs }
        }
    }

    /// Positive number with the given natural log.
    pub fn from_ln(log_abs: f64) -> Self {
        Self::new(1, log_abs)
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            LogNumber { sign: if x > 0.0 { 1 } else { -1 }, log_abs: x.abs().ln() }
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_abs.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn is_finite(self) -> bool {
        self.sign == 0 || self.log_abs.is_finite()
    }

    pub fn log10_abs(self) -> f64 {
        self.log_abs / std::f64::consts::LN_10
    }

    pub fn abs(self) -> Self {
        if self.sign == 0 {
            self
        } else {
            LogNumber { sign: 1, log_abs: self.log_abs }
        }
    }

    /// `self^p` for a positive value.
    pub fn powf(self, p: f64) -> Self {
        match self.sign {
            0 => Self::ZERO,
            _ => LogNumber { sign: 1, log_abs: self.log_abs * p },
        }
    }

    /// Signed sum of arbitrarily many terms, computed relative to the largest
    /// magnitude with compensated accumulation.
    pub fn sum<I: IntoIterator<Item = LogNumber>>(terms: I) -> Self {
        Self::sum_with_scale(terms).0
    }

    /// Like [`LogNumber::sum`] but also returns the largest term magnitude, so
    /// callers can judge cancellation.
    pub fn sum_with_scale<I: IntoIterator<Item = LogNumber>>(terms: I) -> (Self, LogNumber) {
        let terms: Vec<LogNumber> = terms.into_iter().filter(|t| t.sign != 0).collect();
        let Some(max_log) = terms.iter().map(|t| t.log_abs).reduce(f64::max) else {
            return (Self::ZERO, Self::ZERO);
        };
        let acc: CompensatedSum = terms
            .iter()
            .map(|t| f64::from(t.sign) * (t.log_abs - max_log).exp())
            .collect();
        let v = acc.value();
        let out = if v == 0.0 {
            Self::ZERO
        } else {
            LogNumber { sign: if v > 0.0 { 1 } else { -1 }, log_abs: max_log + v.abs().ln() }
        };
        (out, LogNumber::from_ln(max_log))
    }

    /// `self / other` as a plain float; zero denominators give NaN.
    pub fn ratio(self, other: LogNumber) -> f64 {
        (self / other).to_f64()
    }

    /// Relative difference `|a/b − 1|`, well defined far outside `f64` range.
    pub fn rel_diff(self, other: LogNumber) -> f64 {
        if self.sign == 0 && other.sign == 0 {
            return 0.0;
        }
        if self.sign != other.sign {
            return f64::INFINITY;
        }
        (self.log_abs - other.log_abs).exp_m1().abs()
    }
}

impl PartialEq for LogNumber {
    fn eq(&self, other: &Self) -> bool {
        self.sign == other.sign && (self.sign == 0 || self.log_abs == other.log_abs)
    }
}

impl PartialOrd for LogNumber {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.log_abs.partial_cmp(&other.log_abs),
                _ => other.log_abs.partial_cmp(&self.log_abs),
            },
            ord => Some(ord),
        }
    }
}

impl Mul for LogNumber {
    type Output = LogNumber;
    fn mul(self, rhs: LogNumber) -> LogNumber {
        LogNumber::new(self.sign * rhs.sign, self.log_abs + rhs.log_abs)
    }
}

impl Div for LogNumber {
    type Output = LogNumber;
    fn div(self, rhs: LogNumber) -> LogNumber {
        if rhs.sign == 0 {
            return LogNumber { sign: self.sign.max(1), log_abs: f64::NAN };
        }
        LogNumber::new(self.sign * rhs.sign, self.log_abs - rhs.log_abs)
    }
}

impl Neg for LogNumber {
    type Output = LogNumber;
    fn neg(self) -> LogNumber {
        LogNumber { sign: -self.sign, log_abs: self.log_abs }
    }
}

impl std::iter::Product for LogNumber {
    fn product<I: Iterator<Item = LogNumber>>(iter: I) -> Self {
        let mut sign = 1i8;
        let mut logs = CompensatedSum::new();
        for x in iter {
            if x.sign == 0 {
                return LogNumber::ZERO;
            }
            sign *= x.sign;
            logs.add(x.log_abs);
        }
        LogNumber::new(sign, logs.value())
    }
}

impl fmt::Display for LogNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            s => write!(f, "{}exp({})", if s < 0 { "-" } else { "" }, self.log_abs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn huge_powers_stay_finite() {
        let root2 = LogNumber::from_f64(2f64.sqrt());
        let big = root2.powf(1.0e6);
        assert!(big.is_finite());
        assert!((big.log_abs - 0.5e6 * 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn exact_cancellation_gives_zero() {
        let a = LogNumber::from_f64(3.5);
        assert!(LogNumber::sum([a, -a]).is_zero());
    }

    #[test]
    fn mixed_sign_sum() {
        let s = LogNumber::sum([2.0, -0.5, 1.25].map(LogNumber::from_f64));
        assert!((s.to_f64() - 2.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mul_and_sum_match_floats(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let (la, lb) = (LogNumber::from_f64(a), LogNumber::from_f64(b));
            let p = (la * lb).to_f64();
            prop_assert!((p - a * b).abs() <= 1e-13 * (a * b).abs().max(1e-300));
            let s = LogNumber::sum([la, lb]).to_f64();
            prop_assert!((s - (a + b)).abs() <= 1e-13 * (a.abs() + b.abs()));
        }
    }
}
