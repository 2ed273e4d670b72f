//! Small exact-arithmetic helpers shared by the file formats.

use num_integer::Integer;
use num_rational::Ratio;

pub(crate) type Rational = Ratio<i64>;

/// Parses `p/q`, an integer, or a finite decimal literal as an exact rational.
/// Anything else that still parses as a float (exponents, long mantissas) is
/// returned as `Err(value)` so callers can fall back to inexact handling.
pub(crate) fn parse_number(token: &str) -> Result<std::result::Result<Rational, f64>, String> {
    let token = token.trim();
    if let Some((p, q)) = token.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| format!("bad numerator in `{token}`"))?;
        let q: i64 = q.trim().parse().map_err(|_| format!("bad denominator in `{token}`"))?;
        if q <= 0 {
            return Err(format!("non-positive denominator in `{token}`"));
        }
        return Ok(Ok(Rational::new(p, q)));
    }
    if let Some(r) = parse_decimal(token) {
        return Ok(Ok(r));
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Err(v)),
        _ => Err(format!("not a number: `{token}`")),
    }
}

fn parse_decimal(token: &str) -> Option<Rational> {
    let (negative, body) = match token.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, token.strip_prefix('+').unwrap_or(token)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Stay well inside i64 so later lcm scaling cannot overflow.
    if int_part.len() + frac_part.len() > 15 {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let denom = 10i64.pow(frac_part.len() as u32);
    let r = Rational::new(numer, denom);
    Some(if negative { -r } else { r })
}

pub fn lcm_u64(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

/// lcm(1, 2, ..., n).
pub fn lcm_upto(n: usize) -> u64 {
    (1..=n as u64).fold(1, lcm_u64)
}
