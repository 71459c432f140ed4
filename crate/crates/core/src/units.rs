//! Fixed-point thousandths used for vehicle offsets (mm) and speeds (mm/s).
//! Integer arithmetic keeps gap clamping exact and runs byte-reproducible.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Milli(pub i64);

impl Milli {
    pub const ZERO: Milli = Milli(0);

    pub fn from_f64(value: f64) -> Self {
        Milli((value * 1000.0).round() as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Add for Milli {
    type Output = Milli;
    fn add(self, rhs: Milli) -> Milli {
        Milli(self.0 + rhs.0)
    }
}

impl Sub for Milli {
    type Output = Milli;
    fn sub(self, rhs: Milli) -> Milli {
        Milli(self.0 - rhs.0)
    }
}

impl fmt::Display for Milli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:03}", abs / 1000, abs % 1000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseMilliError(pub String);

impl fmt::Display for ParseMilliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not a fixed-point number: `{}`", self.0)
    }
}

impl std::error::Error for ParseMilliError {}

impl FromStr for Milli {
    type Err = ParseMilliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMilliError(s.to_string());
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
        if whole.is_empty() || frac.len() > 3 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let whole: i64 = whole.parse().map_err(|_| err())?;
        let frac: i64 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<3}").parse().map_err(|_| err())?
        };
        let value = whole * 1000 + frac;
        Ok(Milli(if negative { -value } else { value }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats_three_decimals() {
        assert_eq!(Milli(200_000).to_string(), "200.000");
        assert_eq!(Milli(13_890).to_string(), "13.890");
        assert_eq!(Milli(-500).to_string(), "-0.500");
        assert_eq!(Milli::from_f64(13.89), Milli(13_890));
    }

    #[test]
    fn parses_short_fractions() {
        assert_eq!("2.5".parse::<Milli>().unwrap(), Milli(2_500));
        assert_eq!("7".parse::<Milli>().unwrap(), Milli(7_000));
        assert!("1.2345".parse::<Milli>().is_err());
        assert!("x".parse::<Milli>().is_err());
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(v in -10_000_000i64..10_000_000) {
            prop_assert_eq!(Milli(v).to_string().parse::<Milli>().unwrap(), Milli(v));
        }
    }
}
