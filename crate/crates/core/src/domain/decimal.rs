//! Exact non-negative decimal numbers for prices, discounts and weights.
//!
//! Monetary values are compared for equality during evaluation, so they must
//! not be stored as floats: `1.99` and `1.990000001` are different answers.
//! A [`Decimal`] keeps an integer mantissa and a base-10 scale and is
//! normalized on construction (no trailing fractional zeros), which makes
//! `Eq`/`Hash` structural: `0.50 == 0.5` and `175.0 == 175`.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DomainError;

/// Maximum number of significant digits accepted by the parser.
///
/// Fifteen significant decimal digits survive a round trip through `f64`,
/// which is how JSON numbers reach us. Anything longer could be silently
/// altered by the JSON layer before we ever see it, so it is rejected here
/// rather than stored approximately.
const MAX_SIGNIFICANT_DIGITS: usize = 15;

/// An exact non-negative decimal: `mantissa / 10^scale`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimal {
    mantissa: u64,
    scale: u8,
}

impl Decimal {
    pub const ZERO: Decimal = Decimal {
        mantissa: 0,
        scale: 0,
    };

    /// Builds a decimal from a raw mantissa and scale, normalizing away
    /// trailing fractional zeros (`(1990, 3)` becomes `(199, 2)`).
    pub fn new(mantissa: u64, scale: u8) -> Decimal {
        let mut d = Decimal { mantissa, scale };
        d.normalize();
        d
    }

    fn normalize(&mut self) {
        while self.scale > 0 && self.mantissa % 10 == 0 {
            self.mantissa /= 10;
            self.scale -= 1;
        }
        if self.mantissa == 0 {
            self.scale = 0;
        }
    }

    pub fn mantissa(&self) -> u64 {
        self.mantissa
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    /// Nearest `f64`, used only for serialization and display-adjacent math.
    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }
}

impl From<u64> for Decimal {
    fn from(value: u64) -> Decimal {
        Decimal {
            mantissa: value,
            scale: 0,
        }
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Decimal) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Decimal) -> std::cmp::Ordering {
        // Compare a/10^s against b/10^t as a*10^t against b*10^s. The cross
        // products fit in u128: mantissas are < 10^16 and scales <= 15.
        let lhs = self.mantissa as u128 * 10u128.pow(other.scale as u32);
        let rhs = other.mantissa as u128 * 10u128.pow(self.scale as u32);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.mantissa);
        }
        let digits = self.mantissa.to_string();
        let scale = self.scale as usize;
        if digits.len() > scale {
            let (int_part, frac_part) = digits.split_at(digits.len() - scale);
            write!(f, "{int_part}.{frac_part}")
        } else {
            write!(f, "0.{digits:0>scale$}")
        }
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({self})")
    }
}

impl FromStr for Decimal {
    type Err = DomainError;

    /// Parses an unsigned decimal literal (`"175"`, `"0.99"`, `"1.990"`).
    ///
    /// Signs, exponents, and empty integer or fraction parts are rejected;
    /// so are values with more than [`MAX_SIGNIFICANT_DIGITS`] significant
    /// digits, which could not round-trip through JSON unchanged.
    fn from_str(s: &str) -> Result<Decimal, DomainError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DomainError::InvalidValue("empty decimal literal".into()));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() || (frac_part.is_empty() && s.contains('.')) {
            return Err(DomainError::InvalidValue(format!(
                "malformed decimal {s:?}"
            )));
        }
        let all_digits = int_part
            .bytes()
            .chain(frac_part.bytes())
            .all(|b| b.is_ascii_digit());
        if !all_digits {
            return Err(DomainError::InvalidValue(format!(
                "non-digit in decimal {s:?}"
            )));
        }
        let significant = int_part.trim_start_matches('0').len() + frac_part.len();
        if significant > MAX_SIGNIFICANT_DIGITS {
            return Err(DomainError::InvalidValue(format!(
                "too many digits in {s:?}"
            )));
        }
        let mut mantissa: u64 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            mantissa = mantissa * 10 + u64::from(b - b'0');
        }
        Ok(Decimal::new(mantissa, frac_part.len() as u8))
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.scale == 0 {
            serializer.serialize_u64(self.mantissa)
        } else {
            serializer.serialize_f64(self.to_f64())
        }
    }
}

struct DecimalVisitor;

impl Visitor<'_> for DecimalVisitor {
    type Value = Decimal;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a non-negative number or decimal string")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Decimal, E> {
        Ok(Decimal::from(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Decimal, E> {
        u64::try_from(v)
            .map(Decimal::from)
            .map_err(|_| E::custom(format!("negative value {v}")))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Decimal, E> {
        if !v.is_finite() || v < 0.0 {
            return Err(E::custom(format!("value {v} is not a non-negative number")));
        }
        // `{}` prints the shortest decimal that round-trips to `v`, which for
        // JSON-parsed literals of sane length is the original text.
        format!("{v}").parse().map_err(|e| E::custom(e))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Decimal, E> {
        v.parse().map_err(|e| E::custom(e))
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Decimal, D::Error> {
        deserializer.deserialize_any(DecimalVisitor)
    }
}
