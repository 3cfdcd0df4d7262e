// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Exact rational arithmetic for shares, stake and rewards.
//!
//! Everything consensus-critical is a [`Rational`]; floating point never
//! touches a share or a reward.

use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Arbitrary precision rational, always normalised to lowest terms with a
/// positive denominator.
pub type Rational = num_rational::BigRational;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid integer `{0}` in rational literal")]
    Integer(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

/// Builds `numer / denom` from machine integers. Panics on a zero denominator.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn zero() -> Rational {
    Rational::zero()
}

/// Parses `"a/b"` or `"a"`.
pub fn parse(text: &str) -> Result<Rational, ParseRationalError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let (numer, denom) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let numer =
        BigInt::from_str(numer).map_err(|_| ParseRationalError::Integer(numer.to_string()))?;
    let denom =
        BigInt::from_str(denom).map_err(|_| ParseRationalError::Integer(denom.to_string()))?;
    if denom.is_zero() {
        return Err(ParseRationalError::ZeroDenominator(text.to_string()));
    }
    Ok(Rational::new(numer, denom))
}

/// Renders as `"a/b"`, or `"a"` for integers. Round-trips through [`parse`].
pub fn format(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn is_positive(value: &Rational) -> bool {
    value.is_positive()
}

/// Serde adapter storing rationals as `"a/b"` strings.
pub mod serde_str {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for vectors of rationals.
pub mod serde_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        values.iter().map(super::format).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| super::parse(t).map_err(serde::de::Error::custom))
            .collect()
    }
}
