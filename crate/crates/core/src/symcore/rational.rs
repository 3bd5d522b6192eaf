//! Exact rational helpers on top of `num_rational::BigRational`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational with positive, coprime denominator.
pub type Rational = BigRational;

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `12`, `-3`, `0.021`, `4.8e-3` or `7/10` exactly.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

pub fn to_f64(r: &Rational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Very large operands: scale both down by their bit lengths.
            let nb = r.numer().bits() as i64;
            let db = r.denom().bits() as i64;
            let shift_n = (nb - 60).max(0);
            let shift_d = (db - 60).max(0);
            let n = (r.numer() >> shift_n as usize).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift_d as usize).to_f64().unwrap_or(1.0);
            n / d * 2f64.powi((shift_n - shift_d) as i32)
        }
    }
}

/// Exact `r^exp` for an integer exponent. `None` on `0^negative`.
pub fn pow_i(r: &Rational, exp: i64) -> Option<Rational> {
    if exp < 0 {
        if r.is_zero() {
            return None;
        }
        return Some(num_traits::pow(r.recip(), exp.unsigned_abs() as usize));
    }
    Some(num_traits::pow(r.clone(), exp as usize))
}

/// Exact integer `n`-th root of a non-negative integer, if it exists.
fn exact_int_root(x: &BigInt, n: u32) -> Option<BigInt> {
    if x.is_negative() {
        return None;
    }
    let root = x.nth_root(n);
    if num_traits::pow(root.clone(), n as usize) == *x {
        Some(root)
    } else {
        None
    }
}

/// Exact `r^q` for rational `q`, when the result is rational.
pub fn pow_rational(r: &Rational, q: &Rational) -> Option<Rational> {
    if q.is_integer() {
        return pow_i(r, q.to_integer().to_i64()?);
    }
    let den = q.denom().to_u32()?;
    let num = q.numer().to_i64()?;
    let (sign, abs) = if r.is_negative() { (-1, -r.clone()) } else { (1, r.clone()) };
    if sign < 0 && den % 2 == 0 {
        return None;
    }
    let n = exact_int_root(abs.numer(), den)?;
    let d = exact_int_root(abs.denom(), den)?;
    let mut root = Rational::new(n, d);
    if sign < 0 {
        root = -root;
    }
    pow_i(&root, num)
}

/// Floor of a rational as i64.
pub fn floor_i64(r: &Rational) -> Option<i64> {
    r.floor().to_integer().to_i64()
}

pub fn lcm_denoms<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

pub fn is_unit(r: &Rational) -> bool {
    r.is_one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_exactly() {
        assert_eq!(parse_rational("0.021").unwrap(), ratio(21, 1000));
        assert_eq!(parse_rational("8.4").unwrap(), ratio(42, 5));
        assert_eq!(parse_rational("-4.8").unwrap(), ratio(-24, 5));
        assert_eq!(parse_rational("17/10").unwrap(), ratio(17, 10));
        assert_eq!(parse_rational("2.5e-2").unwrap(), ratio(1, 40));
        assert_eq!(parse_rational("1e3").unwrap(), rat(1000));
        assert!(parse_rational("1/0").is_none());
        assert!(parse_rational("x").is_none());
        assert!(parse_rational(".").is_none());
    }

    #[test]
    fn rational_roots() {
        assert_eq!(pow_rational(&ratio(4, 9), &ratio(1, 2)), Some(ratio(2, 3)));
        assert_eq!(pow_rational(&ratio(4, 9), &ratio(-3, 2)), Some(ratio(27, 8)));
        assert_eq!(pow_rational(&rat(-8), &ratio(1, 3)), Some(rat(-2)));
        assert_eq!(pow_rational(&rat(2), &ratio(1, 2)), None);
        assert_eq!(pow_rational(&rat(-4), &ratio(1, 2)), None);
    }

    #[test]
    fn huge_values_convert_to_float() {
        let big = Rational::new(num_traits::pow(BigInt::from(10), 400), num_traits::pow(BigInt::from(10), 399));
        assert!((to_f64(&big) - 10.0).abs() < 1e-9);
    }
}
