//! Exact rational helpers shared by the game, routing and reporting code.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Integer energy amount. Negative values only appear transiently (deltas).
pub type Energy = i64;

/// Arbitrary precision rational used for game payoffs, which accumulate
/// repeated `(1 - epsilon)` factors.
pub type Exact = BigRational;

pub fn exact_int(v: i64) -> Exact {
    BigRational::from_integer(BigInt::from(v))
}

pub fn exact_from(r: &Rational64) -> Exact {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Parses `"3"`, `"-0.125"`, `"1/20"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational64> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Ratio::new(n, d));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() {
        0
    } else {
        digits.parse().ok()?
    };
    let denom = 10i64.checked_pow(frac_part.len() as u32)?;
    let r = Ratio::new(numer, denom);
    Some(if neg { -r } else { r })
}

fn render_parts(numer: &BigInt, denom: &BigInt) -> String {
    // Terminating iff the reduced denominator has no prime factor besides 2 and 5.
    let mut d = denom.clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d.is_even() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{numer}/{denom}");
    }
    let places = twos.max(fives);
    if places == 0 {
        return numer.to_string();
    }
    let scale = BigInt::from(10).pow(places);
    let scaled = numer.abs() * &scale / denom;
    let int_part = &scaled / &scale;
    let frac_part = &scaled % &scale;
    let frac = format!(
        "{:0>width$}",
        frac_part.to_string(),
        width = places as usize
    );
    let frac = frac.trim_end_matches('0');
    let sign = if numer.is_negative() { "-" } else { "" };
    if frac.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

/// Exact decimal when the expansion terminates, `numer/denom` otherwise.
pub fn render_rational(r: &Rational64) -> String {
    render_parts(&BigInt::from(*r.numer()), &BigInt::from(*r.denom()))
}

pub fn render_exact(r: &Exact) -> String {
    render_parts(r.numer(), r.denom())
}

pub fn exact_to_f64(r: &Exact) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn rational_to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Nearest integer, halves rounded away from zero.
pub fn round_half_away(r: &Rational64) -> i64 {
    r.round().to_integer()
}

/// Serde adapter: reads a rational from a TOML/JSON number or string and
/// writes it back as a string via [`render_rational`].
pub mod serde_rational {
    use super::{parse_rational, render_rational, Rational64};
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&render_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        struct RatVisitor;
        impl Visitor<'_> for RatVisitor {
            type Value = Rational64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a rational string such as \"0.05\" or \"1/20\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational64, E> {
                Ok(Rational64::from_integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational64, E> {
                i64::try_from(v)
                    .map(Rational64::from_integer)
                    .map_err(|_| E::custom("integer out of range"))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational64, E> {
                // Shortest round-trip decimal text, so 0.05 means exactly 1/20.
                parse_rational(&format!("{v}"))
                    .ok_or_else(|| E::custom(format!("cannot represent {v} exactly")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational64, E> {
                parse_rational(v).ok_or_else(|| E::custom(format!("invalid rational {v:?}")))
            }
        }
        d.deserialize_any(RatVisitor)
    }
}
