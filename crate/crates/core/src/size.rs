//! Exact item sizes and their L/M/S classification.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational used for expectations, probabilities and
/// chain quantities.
pub type Rational = BigRational;

/// An item size: a reduced rational in `(0, 1]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Size(Ratio<i64>);

impl Size {
    pub const ONE: Size = Size(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Result<Size> {
        if denom == 0 {
            return Err(Error::ParseSize(format!("{numer}/{denom}")));
        }
        Size::from_ratio(Ratio::new(numer, denom))
    }

    pub fn from_ratio(value: Ratio<i64>) -> Result<Size> {
        if value <= Ratio::zero() || value > Ratio::one() {
            return Err(Error::SizeOutOfRange(fmt_ratio(&value)));
        }
        Ok(Size(value))
    }

    pub fn value(self) -> Ratio<i64> {
        self.0
    }

    pub fn numer(self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(self) -> i64 {
        *self.0.denom()
    }

    pub fn class(self) -> SizeClass {
        SizeClass::of_ratio(&self.0)
    }

    pub fn to_rational(self) -> Rational {
        to_big(&self.0)
    }

    pub fn to_f64(self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl fmt::Debug for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Size {
    type Err = Error;

    fn from_str(s: &str) -> Result<Size> {
        Size::from_ratio(parse_ratio(s)?)
    }
}

impl Serialize for Size {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Size {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Size, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses `"num/den"`, an integer, or a decimal literal into an exact rational.
///
/// Decimals convert exactly: `"0.36"` is `9/25`.
pub fn parse_ratio(s: &str) -> Result<Ratio<i64>> {
    let bad = || Error::ParseSize(s.to_string());
    let t = s.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return Err(bad());
    }
    let mut numer: i64 = 0;
    let mut denom: i64 = 1;
    for b in int_part.bytes() {
        numer = numer
            .checked_mul(10)
            .and_then(|v| v.checked_add(i64::from(b - b'0')))
            .ok_or_else(bad)?;
    }
    for b in frac_part.bytes() {
        numer = numer
            .checked_mul(10)
            .and_then(|v| v.checked_add(i64::from(b - b'0')))
            .ok_or_else(bad)?;
        denom = denom.checked_mul(10).ok_or_else(bad)?;
    }
    if neg {
        numer = -numer;
    }
    Ok(Ratio::new(numer, denom))
}

/// Parses into an arbitrary-precision rational (used for probabilities `p`).
pub fn parse_rational(s: &str) -> Result<Rational> {
    Ok(to_big(&parse_ratio(s)?))
}

pub fn to_big(r: &Ratio<i64>) -> Rational {
    Rational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub(crate) fn fmt_ratio(r: &Ratio<i64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Formats a rational as `"num/den"` (denominator always present).
pub fn fmt_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    /// `> 1/2`
    Large,
    /// `(1/3, 1/2]`
    Medium,
    /// `<= 1/3`
    Small,
}

impl SizeClass {
    fn of_ratio(value: &Ratio<i64>) -> SizeClass {
        if *value > Ratio::new(1, 2) {
            SizeClass::Large
        } else if *value > Ratio::new(1, 3) {
            SizeClass::Medium
        } else {
            SizeClass::Small
        }
    }
}

/// Classifies a raw value; values outside `(0, 1]` are a domain error.
pub fn classify(value: Ratio<i64>) -> Result<SizeClass> {
    Size::from_ratio(value).map(Size::class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_boundaries() {
        assert_eq!(classify(Ratio::new(1, 2)).unwrap(), SizeClass::Medium);
        assert_eq!(classify(Ratio::new(1, 3)).unwrap(), SizeClass::Small);
        assert_eq!(classify(Ratio::new(13, 25)).unwrap(), SizeClass::Large);
        assert_eq!(classify(Ratio::new(1, 1)).unwrap(), SizeClass::Large);
        assert!(classify(Ratio::new(0, 1)).is_err());
        assert!(classify(Ratio::new(5, 4)).is_err());
        assert!(classify(Ratio::new(-1, 4)).is_err());
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!("0.36".parse::<Size>().unwrap(), Size::new(9, 25).unwrap());
        assert_eq!("1".parse::<Size>().unwrap(), Size::ONE);
        assert_eq!(".5".parse::<Size>().unwrap(), Size::new(1, 2).unwrap());
        assert_eq!(" 2/6 ".parse::<Size>().unwrap(), Size::new(1, 3).unwrap());
        assert!(matches!("5/4".parse::<Size>(), Err(Error::SizeOutOfRange(_))));
        assert!(matches!("abc".parse::<Size>(), Err(Error::ParseSize(_))));
        assert!(matches!("1/0".parse::<Size>(), Err(Error::ParseSize(_))));
        assert!(matches!("0.3.3".parse::<Size>(), Err(Error::ParseSize(_))));
    }

    #[test]
    fn stored_reduced() {
        let s = Size::new(4, 8).unwrap();
        assert_eq!((s.numer(), s.denom()), (1, 2));
        assert_eq!(s.to_string(), "1/2");
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(d in 1i64..1_000_000, n in 1i64..1_000_000) {
            let n = 1 + n % d;
            let s = Size::new(n, d).unwrap();
            prop_assert_eq!(s.to_string().parse::<Size>().unwrap(), s);
        }
    }
}
