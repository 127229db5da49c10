//! Exact rational scalars used throughout the crate.
//!
//! All probability values are `BigRational`s, kept in lowest terms with a
//! positive denominator by the underlying `num-rational` implementation.
//! There is no floating-point fast path anywhere in the exact pipeline.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::Error;

pub type Rational = BigRational;

/// Shorthand constructor from machine integers.
pub fn rat(num: i64, den: i64) -> Rational {
    assert!(den != 0, "zero denominator");
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn half() -> Rational {
    rat(1, 2)
}

/// Renders a rational as `"num/den"`, abbreviating integers ("0", "1", "3").
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `"num/den"` or `"num"`. In strict mode the input must already be
/// in lowest terms with a positive denominator; in lenient mode it is
/// normalized.
pub fn parse_rational(s: &str, strict: bool) -> Result<Rational, Error> {
    let s = s.trim();
    let (num_s, den_s) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let num: BigInt = num_s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational {s:?}")))?;
    let den: BigInt = den_s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational {s:?}")))?;
    if den.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    let r = Rational::new(num.clone(), den.clone());
    if strict && (den.is_negative() || r.numer() != &num || r.denom() != &den) {
        return Err(Error::Parse(format!("rational {s:?} is not normalized")));
    }
    Ok(r)
}
