//! Exact rational numbers used for every timestamp, offset and bound.

use num_bigint::BigInt;
use num_traits::{One, Zero};

pub use num_rational::BigRational as Rational;

/// `num / den` as an exact rational. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `12`, `-3`, `0.01`, `.5`, `1/100` or `-7/2` into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    if body.is_empty() {
        return None;
    }
    let value = if let Some((num, den)) = body.split_once('/') {
        let num = parse_decimal(num)?;
        let den = parse_decimal(den)?;
        if den.is_zero() {
            return None;
        }
        num / den
    } else {
        parse_decimal(body)?
    };
    Some(if negative { -value } else { value })
}

fn parse_decimal(text: &str) -> Option<Rational> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let mut denom = BigInt::one();
    for _ in 0..frac_part.len() {
        denom *= 10;
    }
    Some(Rational::new(numer, denom))
}

/// Renders a rational as a decimal when it has a short terminating expansion,
/// otherwise as `n/d`. Only used for human-facing labels.
pub fn to_decimal_label(value: &Rational) -> String {
    let mut den = value.denom().clone();
    let mut digits = 0usize;
    for factor in [2u32, 5u32] {
        while (&den % factor).is_zero() {
            den /= factor;
        }
    }
    if !den.is_one() {
        return value.to_string();
    }
    let mut scaled = value.clone();
    while !scaled.is_integer() && digits < 12 {
        scaled *= int(10);
        digits += 1;
    }
    if !scaled.is_integer() {
        return value.to_string();
    }
    let n = scaled.to_integer();
    let negative = n < BigInt::zero();
    let mut s = if negative {
        (-n).to_string()
    } else {
        n.to_string()
    };
    if digits > 0 {
        while s.len() <= digits {
            s.insert(0, '0');
        }
        s.insert(s.len() - digits, '.');
    }
    if negative {
        s.insert(0, '-');
    }
    s
}
