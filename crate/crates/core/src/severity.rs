use core::fmt;

use thiserror::Error;

/// Syslog severity, 0 (emergency) through 7 (debug). Lower is more severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeverityLevel(u8);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeverityError {
    #[error("severity {0} is outside the syslog range 0-7")]
    OutOfRange(i64),
    #[error("severity {0} is not an integral value")]
    Fractional(f64),
    #[error("severity {0:?} is not a number")]
    NotNumeric(alloc::string::String),
}

impl SeverityLevel {
    pub const COUNT: usize = 8;

    pub const EMERGENCY: Self = Self(0);
    pub const ALERT: Self = Self(1);
    pub const CRITICAL: Self = Self(2);
    pub const ERROR: Self = Self(3);
    pub const WARNING: Self = Self(4);
    pub const NOTICE: Self = Self(5);
    pub const INFO: Self = Self(6);
    pub const DEBUG: Self = Self(7);

    pub fn new(value: u8) -> Result<Self, SeverityError> {
        if value <= 7 {
            Ok(Self(value))
        } else {
            Err(SeverityError::OutOfRange(value as i64))
        }
    }

    pub fn from_i64(value: i64) -> Result<Self, SeverityError> {
        if (0..=7).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(SeverityError::OutOfRange(value))
        }
    }

    /// Accepts float-encoded priorities such as `7.0`; any fractional part is
    /// rejected.
    pub fn from_f64(value: f64) -> Result<Self, SeverityError> {
        if !value.is_finite() || libm::trunc(value) != value {
            return Err(SeverityError::Fractional(value));
        }
        if !(0.0..=7.0).contains(&value) {
            return Err(SeverityError::OutOfRange(value as i64));
        }
        Ok(Self(value as u8))
    }

    /// Parses `"7"`, `"7.0"`, `" 3 "`.
    pub fn parse_str(text: &str) -> Result<Self, SeverityError> {
        let trimmed = text.trim();
        if let Ok(int) = trimmed.parse::<i64>() {
            return Self::from_i64(int);
        }
        match trimmed.parse::<f64>() {
            Ok(float) => Self::from_f64(float),
            Err(_) => Err(SeverityError::NotNumeric(trimmed.into())),
        }
    }

    pub const fn value(self) -> u8 {
        self.0
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..8u8).map(Self)
    }

    pub const fn name(self) -> &'static str {
        match self.0 {
            0 => "emergency",
            1 => "alert",
            2 => "critical",
            3 => "error",
            4 => "warning",
            5 => "notice",
            6 => "info",
            _ => "debug",
        }
    }
}

impl fmt::Display for SeverityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u8> for SeverityLevel {
    type Error = SeverityError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SeverityLevel> for u8 {
    fn from(level: SeverityLevel) -> u8 {
        level.0
    }
}
