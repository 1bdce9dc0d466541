use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Natural-log magnitude below which a sum is clamped to zero.
pub const UNDERFLOW_LOG: f64 = -5000.0;

/// A signed real stored as `sign * exp(log_magnitude)`.
///
/// Products, quotients and powers keep the full log magnitude. Sums whose
/// magnitude drops below `exp(UNDERFLOW_LOG)` are clamped to zero and carry
/// the `underflow` flag, which propagates through later arithmetic.
#[derive(Clone, Copy)]
pub struct LogWeight {
    log_magnitude: f64,
    sign: i8,
    underflow: bool,
}

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight {
        log_magnitude: f64::NEG_INFINITY,
        sign: 0,
        underflow: false,
    };
    pub const ONE: LogWeight = LogWeight {
        log_magnitude: 0.0,
        sign: 1,
        underflow: false,
    };

    /// Builds a weight from `ln|v|` and a sign. A zero sign yields zero.
    pub fn from_log(log_magnitude: f64, sign: i8) -> Self {
        if sign == 0 || log_magnitude == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        LogWeight {
            log_magnitude,
            sign: sign.signum(),
            underflow: false,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            Self::from_log(v.abs().ln(), if v > 0.0 { 1 } else { -1 })
        }
    }

    /// `ln|v|`; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.log_magnitude
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn underflowed(&self) -> bool {
        self.underflow
    }

    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_magnitude.exp()
        }
    }

    pub fn abs(self) -> Self {
        LogWeight {
            sign: self.sign.abs(),
            ..self
        }
    }

    pub fn powi(self, e: u64) -> Self {
        if e == 0 {
            return LogWeight {
                underflow: self.underflow,
                ..Self::ONE
            };
        }
        if self.sign == 0 {
            return self;
        }
        let sign = if self.sign < 0 && e % 2 == 1 { -1 } else { 1 };
        LogWeight {
            log_magnitude: self.log_magnitude * e as f64,
            sign,
            underflow: self.underflow,
        }
    }

    /// Relative difference `|a - b| / max(|a|, |b|)`, zero when both are zero.
    pub fn rel_diff(&self, other: &LogWeight) -> f64 {
        let a = *self;
        let b = *other;
        if a.is_zero() && b.is_zero() {
            return 0.0;
        }
        if a.sign != b.sign {
            return 1.0;
        }
        let (hi, lo) = if a.log_magnitude >= b.log_magnitude {
            (a.log_magnitude, b.log_magnitude)
        } else {
            (b.log_magnitude, a.log_magnitude)
        };
        -(lo - hi).exp_m1()
    }

    pub(crate) fn clamped(mut self) -> Self {
        if self.sign != 0 && self.log_magnitude < UNDERFLOW_LOG {
            self.sign = 0;
            self.log_magnitude = f64::NEG_INFINITY;
            self.underflow = true;
        }
        self
    }

    pub(crate) fn with_flag(mut self, flag: bool) -> Self {
        self.underflow |= flag;
        self
    }
}

impl Default for LogWeight {
    fn default() -> Self {
        Self::ZERO
    }
}

impl fmt::Debug for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == 0 {
            write!(f, "LogWeight(0{})", if self.underflow { ", underflow" } else { "" })
        } else {
            write!(
                f,
                "LogWeight({}exp({}))",
                if self.sign < 0 { "-" } else { "" },
                self.log_magnitude
            )
        }
    }
}

impl fmt::Display for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_f64();
        if v != 0.0 || self.sign == 0 {
            write!(f, "{v:e}")
        } else {
            // below f64 range: print mantissa/exponent from the log
            let log10 = self.log_magnitude / std::f64::consts::LN_10;
            let exp = log10.floor();
            let mant = 10f64.powf(log10 - exp);
            let s = if self.sign < 0 { "-" } else { "" };
            write!(f, "{s}{mant}e{exp}")
        }
    }
}

impl PartialEq for LogWeight {
    fn eq(&self, other: &Self) -> bool {
        self.sign == other.sign && (self.sign == 0 || self.log_magnitude == other.log_magnitude)
    }
}

impl PartialOrd for LogWeight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.log_magnitude.partial_cmp(&other.log_magnitude),
                _ => other.log_magnitude.partial_cmp(&self.log_magnitude),
            },
            ord => Some(ord),
        }
    }
}

impl Add for LogWeight {
    type Output = LogWeight;

    fn add(self, rhs: LogWeight) -> LogWeight {
        let flag = self.underflow || rhs.underflow;
        if self.sign == 0 {
            return rhs.with_flag(flag);
        }
        if rhs.sign == 0 {
            return self.with_flag(flag);
        }
        let (big, small) = if self.log_magnitude >= rhs.log_magnitude {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let d = small.log_magnitude - big.log_magnitude;
        let out = if big.sign == small.sign {
            LogWeight::from_log(big.log_magnitude + d.exp().ln_1p(), big.sign)
        } else {
            let rest = -d.exp_m1();
            if rest <= 0.0 {
                LogWeight::ZERO
            } else {
                LogWeight::from_log(big.log_magnitude + rest.ln(), big.sign)
            }
        };
        out.clamped().with_flag(flag)
    }
}

impl Neg for LogWeight {
    type Output = LogWeight;

    fn neg(self) -> LogWeight {
        LogWeight {
            sign: -self.sign,
            ..self
        }
    }
}

impl Sub for LogWeight {
    type Output = LogWeight;

    fn sub(self, rhs: LogWeight) -> LogWeight {
        self + (-rhs)
    }
}

impl Mul for LogWeight {
    type Output = LogWeight;

    fn mul(self, rhs: LogWeight) -> LogWeight {
        let flag = self.underflow || rhs.underflow;
        if self.sign == 0 || rhs.sign == 0 {
            return LogWeight::ZERO.with_flag(flag);
        }
        LogWeight {
            log_magnitude: self.log_magnitude + rhs.log_magnitude,
            sign: self.sign * rhs.sign,
            underflow: flag,
        }
    }
}

impl Div for LogWeight {
    type Output = LogWeight;

    /// Division by zero yields an infinite magnitude; callers guard it.
    fn div(self, rhs: LogWeight) -> LogWeight {
        let flag = self.underflow || rhs.underflow;
        if self.sign == 0 {
            return LogWeight::ZERO.with_flag(flag);
        }
        if rhs.sign == 0 {
            return LogWeight {
                log_magnitude: f64::INFINITY,
                sign: self.sign,
                underflow: flag,
            };
        }
        LogWeight {
            log_magnitude: self.log_magnitude - rhs.log_magnitude,
            sign: self.sign * rhs.sign,
            underflow: flag,
        }
    }
}
