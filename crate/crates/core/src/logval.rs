//! Nonnegative reals carried as natural logarithms.
//!
//! Powers, gains and attenuations in this crate routinely span hundreds of
//! orders of magnitude (`a(f)^r` for large `r`), so they are stored as `ln x`.
//! Exact zero is `-inf`; `NaN` is never a valid value.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonnegative real `x` represented by `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    /// Wraps a natural logarithm. Rejects `NaN` and `+inf`.
    pub fn from_ln(ln_value: f64) -> Result<Self> {
        if ln_value.is_nan() || ln_value == f64::INFINITY {
            return Err(Error::Numerical(format!(
                "invalid log-domain value {ln_value}"
            )));
        }
        Ok(LogValue(ln_value))
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn new_unchecked(ln_value: f64) -> Self {
        debug_assert!(!ln_value.is_nan() && ln_value != f64::INFINITY);
        LogValue(ln_value)
    }

    pub fn from_linear(value: f64) -> Result<Self> {
        if !(value >= 0.0) || value.is_infinite() {
            return Err(Error::Domain(format!(
                "log-domain values must be finite and nonnegative, got {value}"
            )));
        }
        Ok(LogValue(value.ln()))
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    /// `log2` of the represented value.
    #[inline]
    pub fn log2(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }

    /// Linear value; underflows to 0 and overflows to `inf` like `exp`.
    #[inline]
    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Multiplicative inverse. Fails for zero.
    pub fn recip(self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Numerical("reciprocal of zero".into()));
        }
        Ok(LogValue(-self.0))
    }

    /// `x^p` for a finite real exponent.
    pub fn powf(self, p: f64) -> Self {
        if self.is_zero() {
            return if p == 0.0 { LogValue::ONE } else { self };
        }
        LogValue(self.0 * p)
    }

    /// `ln(x + y)`.
    pub fn add_ln(self, other: LogValue) -> LogValue {
        let (hi, lo) = if self.0 >= other.0 {
            (self.0, other.0)
        } else {
            (other.0, self.0)
        };
        if hi == f64::NEG_INFINITY {
            return LogValue::ZERO;
        }
        LogValue(hi + (lo - hi).exp().ln_1p())
    }

    /// `ln(x - y)` for `x >= y`.
    pub fn sub_ln(self, other: LogValue) -> Result<LogValue> {
        if other.0 > self.0 {
            return Err(Error::Numerical(format!(
                "log-domain subtraction would be negative ({} - {})",
                self.0, other.0
            )));
        }
        if other.is_zero() {
            return Ok(self);
        }
        if other.0 == self.0 {
            return Ok(LogValue::ZERO);
        }
        Ok(LogValue(self.0 + (-(other.0 - self.0).exp()).ln_1p()))
    }

    /// `ln(log2(1 + x))`, accurate when `x` underflows in linear form.
    pub fn ln_log2_1p(self) -> LogValue {
        if self.is_zero() {
            return LogValue::ZERO;
        }
        let ln_nats = if self.0 < -30.0 {
            // log1p(x) = x (1 - x/2 + ...), relative error below 1e-13 here
            self.0 + (-0.5 * self.0.exp()).ln_1p()
        } else if self.0 > 30.0 {
            // ln(1 + x) = ln x + ln(1 + 1/x) without forming x
            (self.0 + (-self.0).exp().ln_1p()).ln()
        } else {
            self.0.exp().ln_1p().ln()
        };
        LogValue(ln_nats - std::f64::consts::LN_2.ln())
    }
}

impl Default for LogValue {
    fn default() -> Self {
        LogValue::ZERO
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({})", self.0)
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 + rhs.0)
    }
}

impl Div for LogValue {
    type Output = LogValue;
    /// Division by zero yields zero only for a zero numerator; otherwise it
    /// panics, mirroring integer division semantics.
    fn div(self, rhs: LogValue) -> LogValue {
        assert!(!rhs.is_zero(), "LogValue division by zero");
        if self.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 - rhs.0)
    }
}

impl Add for LogValue {
    type Output = LogValue;
    fn add(self, rhs: LogValue) -> LogValue {
        self.add_ln(rhs)
    }
}

impl Sub for LogValue {
    type Output = LogValue;
    /// Panics when the difference is negative; use [`LogValue::sub_ln`] to
    /// handle that case.
    fn sub(self, rhs: LogValue) -> LogValue {
        self.sub_ln(rhs).expect("negative LogValue difference")
    }
}

/// `ln Σ exp(v_i)` with a max shift. Zeros are dropped; an empty sum is zero.
pub fn log_sum_exp<I>(values: I) -> LogValue
where
    I: IntoIterator<Item = LogValue>,
{
    let lns: Vec<f64> = values
        .into_iter()
        .map(LogValue::ln)
        .filter(|v| *v != f64::NEG_INFINITY)
        .collect();
    log_sum_exp_raw(&lns)
}

/// Same as [`log_sum_exp`] on raw natural logarithms.
pub fn log_sum_exp_raw(lns: &[f64]) -> LogValue {
    let max = lns
        .iter()
        .copied()
        .filter(|v| *v != f64::NEG_INFINITY)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogValue::ZERO;
    }
    let mut count = 0usize;
    let mut only = max;
    let mut acc = 0.0;
    for &v in lns {
        if v == f64::NEG_INFINITY {
            continue;
        }
        count += 1;
        only = v;
        acc += (v - max).exp();
    }
    if count == 1 {
        return LogValue(only);
    }
    LogValue(max + acc.ln())
}
