//! Scalar types used for credit balances.
//!
//! The allocator is generic over the credit scalar. The canonical choice is
//! [`Rational`], which keeps every balance exact; floating point scalars are
//! supported for exploratory runs where all charges are integral.

use std::fmt;
use std::ops::Neg;

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive, Zero};

/// Exact rational number backed by 128-bit integers.
pub type Rational = Ratio<i128>;

/// A number type that can hold credit balances.
pub trait CreditScalar:
    Num + Clone + PartialOrd + Neg<Output = Self> + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_rational(value: &Rational) -> Self;

    fn from_u64(value: u64) -> Self {
        Self::from_rational(&Rational::from_integer(value as i128))
    }

    /// Largest integer not greater than `self`.
    fn floor_i128(&self) -> i128;

    /// Smallest integer not less than `self`.
    fn ceil_i128(&self) -> i128;

    fn to_f64(&self) -> f64;

    /// Whether `self` is an integer value.
    fn is_integral(&self) -> bool {
        self.floor_i128() == self.ceil_i128()
    }
}

macro_rules! impl_ratio_scalar {
    ($int:ty) => {
        impl CreditScalar for Ratio<$int> {
            fn from_rational(value: &Rational) -> Self {
                let numer = <$int>::try_from(*value.numer()).expect("numerator out of range");
                let denom = <$int>::try_from(*value.denom()).expect("denominator out of range");
                Ratio::new(numer, denom)
            }

            fn floor_i128(&self) -> i128 {
                self.floor().to_integer() as i128
            }

            fn ceil_i128(&self) -> i128 {
                self.ceil().to_integer() as i128
            }

            fn to_f64(&self) -> f64 {
                ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
            }
        }
    };
}

impl_ratio_scalar!(i64);
impl_ratio_scalar!(i128);

macro_rules! impl_float_scalar {
    ($float:ty) => {
        impl CreditScalar for $float {
            fn from_rational(value: &Rational) -> Self {
                (*value.numer() as f64 / *value.denom() as f64) as $float
            }

            fn floor_i128(&self) -> i128 {
                self.floor() as i128
            }

            fn ceil_i128(&self) -> i128 {
                self.ceil() as i128
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

/// Error returned by [`parse_rational`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a rational number: {0:?}")]
pub struct ParseRationalError(pub String);

/// Parses an exact rational from an integer, a plain decimal (`"-0.25"`) or `"p/q"`.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: i128 = p.trim().parse().map_err(|_| err())?;
        let q: i128 = q.trim().parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    let digits_ok = |d: &str| d.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) || !digits_ok(frac_part) || frac_part.len() > 30 {
        return Err(err());
    }
    let int: i128 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| err())?
    };
    let mut value = Rational::from_integer(int);
    if !frac_part.is_empty() {
        let frac: i128 = frac_part.parse().map_err(|_| err())?;
        let scale = 10i128.checked_pow(frac_part.len() as u32).ok_or_else(err)?;
        value += Rational::new(frac, scale);
    }
    Ok(if negative { -value } else { value })
}

/// Floor of a non-negative rational as a slice count.
pub(crate) fn floor_u64(value: &Rational) -> u64 {
    value.floor().to_integer().max(0) as u64
}

/// Shorthand for `Rational::new(numer, denom)`.
pub fn rational(numer: i128, denom: i128) -> Rational {
    debug_assert!(!denom.is_zero());
    Rational::new(numer, denom)
}

pub(crate) fn rat_u64(value: u64) -> Rational {
    Rational::from_integer(value as i128)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_rational("0.5").unwrap(), rational(1, 2));
        assert_eq!(parse_rational("-1.25").unwrap(), rational(-5, 4));
        assert_eq!(parse_rational("3").unwrap(), rational(3, 1));
        assert_eq!(parse_rational(" 2/6 ").unwrap(), rational(1, 3));
        assert_eq!(parse_rational(".75").unwrap(), rational(3, 4));
        assert!(parse_rational("").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.2.3").is_err());
    }

    #[test]
    fn floor_and_ceil_agree_across_scalars() {
        let r = rational(7, 2);
        assert_eq!(r.floor_i128(), 3);
        assert_eq!(r.ceil_i128(), 4);
        assert_eq!(<f64 as CreditScalar>::from_rational(&r).floor_i128(), 3);
        assert_eq!(<f64 as CreditScalar>::from_rational(&r).ceil_i128(), 4);
        let neg = rational(-7, 2);
        assert_eq!(neg.floor_i128(), -4);
        assert_eq!(neg.ceil_i128(), -3);
        assert!(rational(4, 2).is_integral());
        assert!(!r.is_integral());
    }
}
