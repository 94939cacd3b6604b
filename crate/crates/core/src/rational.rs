//! Exact rational arithmetic helpers shared by the parameter lab, the
//! adversary's window accounting, and the model-bound checks.
//!
//! All constraint math in this crate is exact: boundary cases are decided by
//! margins around 1e-4, well below what f64 round-tripping through decimal
//! strings can be trusted with.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Parses a rational from `"n/d"`, a decimal string like `"0.04"`, or a bare
/// integer. Decimals convert exactly (`0.04` -> `4/100`).
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|e| e.to_string())?;
        let d = BigInt::from_str(d.trim()).map_err(|e| e.to_string())?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let int_part = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            BigInt::from_str(int).map_err(|e| e.to_string())?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad decimal {s:?}"));
        }
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = BigInt::from_str(frac).map_err(|e| e.to_string())?;
        let mut num = int_part.abs() * &scale + frac_part;
        if neg {
            num = -num;
        }
        return Ok(BigRational::new(num, scale));
    }
    let n = BigInt::from_str(s).map_err(|e| format!("bad rational {s:?}: {e}"))?;
    Ok(BigRational::from_integer(n))
}

/// Canonical string form, `"n/d"` reduced, or `"n"` for integers.
pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn from_u64(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Narrows to a 64-bit rational when the parts fit.
pub fn to_ratio64(r: &BigRational) -> Option<num_rational::Rational64> {
    let n = r.numer().to_i64()?;
    let d = r.denom().to_i64()?;
    if d == 0 {
        return None;
    }
    Some(num_rational::Rational64::new(n, d))
}

/// Serde adapter: rationals travel as canonical strings so configs and
/// reports stay exact and byte-stable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(pub BigRational);

impl Rat {
    pub fn parse(s: &str) -> Result<Self, String> {
        parse_rational(s).map(Rat)
    }

    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&rational_to_string(&self.0))
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&rational_to_string(&self.0))
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        parse_rational(&s).map(Rat).map_err(D::Error::custom)
    }
}

impl From<BigRational> for Rat {
    fn from(r: BigRational) -> Self {
        Rat(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_rational("0.04").unwrap(), BigRational::new(BigInt::from(1), BigInt::from(25)));
        assert_eq!(parse_rational("0.737").unwrap(), BigRational::new(BigInt::from(737), BigInt::from(1000)));
        assert_eq!(parse_rational("-1.5").unwrap(), BigRational::new(BigInt::from(-3), BigInt::from(2)));
        assert_eq!(parse_rational("3/7").unwrap(), BigRational::new(BigInt::from(3), BigInt::from(7)));
        assert_eq!(parse_rational("2").unwrap(), BigRational::from_integer(BigInt::from(2)));
    }

    #[test]
    fn canonical_round_trip() {
        for s in ["1/25", "737/1000", "0", "-3/2", "41"] {
            let r = parse_rational(s).unwrap();
            assert_eq!(rational_to_string(&r), s.to_string());
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.2.3").is_err());
    }
}
