//! Exact rational values used by every metric and score.
//!
//! All agreement ratios, means and match scores are kept as arbitrary
//! precision rationals so that oracle comparisons and tie detection are
//! exact. Rendering to text uses four fractional digits with
//! round-half-even.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fractional digits used when rendering a [`Fraction`].
pub const DECIMAL_DIGITS: u32 = 4;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fraction(BigRational);

impl Fraction {
    /// Builds `numer / denom`.
    ///
    /// Panics if `denom` is zero.
    pub fn new(numer: u64, denom: u64) -> Self {
        assert!(denom != 0, "fraction with zero denominator");
        Fraction(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_integer(value: u64) -> Self {
        Fraction(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn zero() -> Self {
        Fraction(BigRational::zero())
    }

    pub fn one() -> Self {
        Fraction(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    /// Mean of a non-empty slice, `None` when empty.
    pub fn mean<'a, I>(values: I) -> Option<Fraction>
    where
        I: IntoIterator<Item = &'a Fraction>,
    {
        let mut count = 0u64;
        let mut total = BigRational::zero();
        for v in values {
            total += &v.0;
            count += 1;
        }
        if count == 0 {
            None
        } else {
            Some(Fraction(total / BigInt::from(count)))
        }
    }

    /// Divides by a positive integer.
    pub fn div_int(&self, divisor: u64) -> Fraction {
        assert!(divisor != 0, "division by zero");
        Fraction(&self.0 / BigInt::from(divisor))
    }

    /// Lossy conversion for plotting and tolerance checks.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Renders with [`DECIMAL_DIGITS`] fractional digits, rounding half to even.
    pub fn to_decimal(&self) -> String {
        let scale = BigInt::from(10u32).pow(DECIMAL_DIGITS);
        let scaled = &self.0 * BigRational::from_integer(scale.clone());
        let floor = scaled.floor();
        let remainder = &scaled - &floor;
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let mut units = floor.to_integer();
        if remainder > half || (remainder == half && units.is_odd()) {
            units += 1;
        }
        let negative = units.is_negative();
        let abs = units.abs();
        let (int_part, frac_part) = abs.div_rem(&scale);
        format!(
            "{}{}.{:0width$}",
            if negative { "-" } else { "" },
            int_part,
            frac_part,
            width = DECIMAL_DIGITS as usize
        )
    }

    /// Exact `numer/denom` form (or just the integer when the denominator is 1).
    pub fn to_exact_string(&self) -> String {
        if self.0.denom().is_one() {
            self.0.numer().to_string()
        } else {
            format!("{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl From<BigRational> for Fraction {
    fn from(value: BigRational) -> Self {
        Fraction(value)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

impl fmt::Debug for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fraction({})", self.to_exact_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid fraction {0:?}; expected `n`, `n/d` or a decimal")]
pub struct ParseFractionError(String);

impl FromStr for Fraction {
    type Err = ParseFractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFractionError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| err())?;
            let d: BigInt = d.trim().parse().map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            return Ok(Fraction(BigRational::new(n, d)));
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            let digits: BigInt = format!("{int_part}{frac_part}").parse().map_err(|_| err())?;
            let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
            return Ok(Fraction(BigRational::new(digits, scale)));
        }
        let n: BigInt = s.parse().map_err(|_| err())?;
        Ok(Fraction(BigRational::from_integer(n)))
    }
}

impl Add for Fraction {
    type Output = Fraction;
    fn add(self, rhs: Fraction) -> Fraction {
        Fraction(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Fraction> for &'a Fraction {
    type Output = Fraction;
    fn add(self, rhs: &'a Fraction) -> Fraction {
        Fraction(&self.0 + &rhs.0)
    }
}

impl Sub for Fraction {
    type Output = Fraction;
    fn sub(self, rhs: Fraction) -> Fraction {
        Fraction(self.0 - rhs.0)
    }
}

impl Mul<u64> for &Fraction {
    type Output = Fraction;
    fn mul(self, rhs: u64) -> Fraction {
        Fraction(&self.0 * BigInt::from(rhs))
    }
}

impl Mul for Fraction {
    type Output = Fraction;
    fn mul(self, rhs: Fraction) -> Fraction {
        Fraction(self.0 * rhs.0)
    }
}

impl Sum for Fraction {
    fn sum<I: Iterator<Item = Fraction>>(iter: I) -> Self {
        iter.fold(Fraction::zero(), |acc, v| acc + v)
    }
}

impl<'a> Sum<&'a Fraction> for Fraction {
    fn sum<I: Iterator<Item = &'a Fraction>>(iter: I) -> Self {
        Fraction(iter.fold(BigRational::zero(), |acc, v| acc + &v.0))
    }
}

// Serialized as `{"decimal": "0.7500", "exact": "3/4"}` so documents stay
// readable while round-tripping without loss.
#[derive(Serialize, Deserialize)]
struct FractionRepr {
    decimal: String,
    exact: String,
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FractionRepr {
            decimal: self.to_decimal(),
            exact: self.to_exact_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FractionRepr::deserialize(deserializer)?;
        repr.exact.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_four_digits() {
        assert_eq!(Fraction::new(3, 4).to_decimal(), "0.7500");
        assert_eq!(Fraction::one().to_decimal(), "1.0000");
        assert_eq!(Fraction::new(2, 3).to_decimal(), "0.6667");
        assert_eq!(Fraction::new(5, 6).to_decimal(), "0.8333");
        assert_eq!(Fraction::from_integer(4).to_decimal(), "4.0000");
    }

    #[test]
    fn rounds_half_to_even() {
        // 0.00005 -> 0.0000, 0.00015 -> 0.0002, 0.00025 -> 0.0002
        assert_eq!(Fraction::new(5, 100_000).to_decimal(), "0.0000");
        assert_eq!(Fraction::new(15, 100_000).to_decimal(), "0.0002");
        assert_eq!(Fraction::new(25, 100_000).to_decimal(), "0.0002");
        assert_eq!(Fraction::new(35, 100_000).to_decimal(), "0.0004");
        assert_eq!(Fraction::new(99_995, 100_000).to_decimal(), "1.0000");
        assert_eq!(Fraction::new(99_985, 100_000).to_decimal(), "0.9998");
    }

    #[test]
    fn parses_exact_and_decimal_forms() {
        assert_eq!("3/4".parse::<Fraction>().unwrap(), Fraction::new(3, 4));
        assert_eq!("0.75".parse::<Fraction>().unwrap(), Fraction::new(3, 4));
        assert_eq!("2".parse::<Fraction>().unwrap(), Fraction::from_integer(2));
        assert!("1/0".parse::<Fraction>().is_err());
        assert!("abc".parse::<Fraction>().is_err());
        assert!("1.".parse::<Fraction>().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let f = Fraction::new(7, 8);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"decimal":"0.8750","exact":"7/8"}"#);
        let back: Fraction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(Fraction::mean(&[]), None);
        let values = [Fraction::one(), Fraction::new(1, 2)];
        assert_eq!(Fraction::mean(&values), Some(Fraction::new(3, 4)));
    }
}
