//! GS1 Global Trade Item Numbers.
//!
//! GTINs arrive in mixed shapes: GTIN-8 on small packs, EAN-13 from scanner
//! exports, occasionally truncated strings from OCR. They are all normalized
//! to the 14-digit form by left-padding with zeros, which is the comparison
//! key everywhere else in the pipeline.
//!
//! The GS1 check digit is validated but a failure does not reject the value:
//! model output is matched against ground truth verbatim, and a mistyped
//! GTIN is exactly the kind of wrong answer evaluation needs to see.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DomainError;

pub const GTIN_LEN: usize = 14;

/// A normalized 14-digit trade item number.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gtin {
    /// ASCII digits, always exactly 14 of them.
    digits: [u8; GTIN_LEN],
}

impl Gtin {
    pub fn as_str(&self) -> &str {
        // Constructed from ASCII digits only.
        std::str::from_utf8(&self.digits).expect("GTIN digits are ASCII")
    }

    /// Whether the final digit is a valid GS1 check digit for the first 13.
    pub fn check_ok(&self) -> bool {
        let payload = &self.as_str()[..GTIN_LEN - 1];
        let expected = gtin_check_digit(payload).expect("13 ASCII digits");
        self.digits[GTIN_LEN - 1] - b'0' == expected
    }
}

impl fmt::Display for Gtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Gtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gtin({})", self.as_str())
    }
}

impl FromStr for Gtin {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Gtin, DomainError> {
        normalize_gtin(s)
    }
}

/// Normalizes a raw GTIN string to the 14-digit form.
///
/// The input is trimmed and must be 1 to 14 ASCII digits; shorter values are
/// left-padded with zeros (`"8715700421995"` becomes `"08715700421995"`).
/// Normalization is idempotent: feeding a normalized GTIN back in returns
/// the same value.
pub fn normalize_gtin(raw: &str) -> Result<Gtin, DomainError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(DomainError::InvalidGtin("empty string".into()));
    }
    if trimmed.len() > GTIN_LEN {
        return Err(DomainError::InvalidGtin(format!(
            "{trimmed:?} has {} digits, more than {GTIN_LEN}",
            trimmed.len()
        )));
    }
    if !trimmed.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DomainError::InvalidGtin(format!(
            "{trimmed:?} contains non-digits"
        )));
    }
    let mut digits = [b'0'; GTIN_LEN];
    digits[GTIN_LEN - trimmed.len()..].copy_from_slice(trimmed.as_bytes());
    Ok(Gtin { digits })
}

/// GS1 mod-10 check digit for a 13-digit payload.
///
/// Digits are weighted 3, 1, 3, 1, ... starting from the left (for a
/// 13-digit payload the rightmost digit always lands on weight 3); the check
/// digit is whatever brings the weighted sum up to a multiple of 10.
pub fn gtin_check_digit(payload: &str) -> Result<u8, DomainError> {
    if payload.len() != GTIN_LEN - 1 || !payload.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DomainError::InvalidGtin(format!(
            "check digit payload must be 13 digits, got {payload:?}"
        )));
    }
    let sum: u32 = payload
        .bytes()
        .enumerate()
        .map(|(i, b)| {
            let weight = if i % 2 == 0 { 3 } else { 1 };
            u32::from(b - b'0') * weight
        })
        .sum();
    Ok(((10 - sum % 10) % 10) as u8)
}

impl Serialize for Gtin {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

struct GtinVisitor;

impl Visitor<'_> for GtinVisitor {
    type Value = Gtin;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a GTIN as a digit string or integer")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Gtin, E> {
        normalize_gtin(v).map_err(E::custom)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Gtin, E> {
        normalize_gtin(&v.to_string()).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Gtin {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Gtin, D::Error> {
        deserializer.deserialize_any(GtinVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent check digit computation, written against the GS1 manual
    /// rather than the implementation above: weights are assigned from the
    /// rightmost payload digit leftwards as 3, 1, 3, 1, ...
    fn check_digit_oracle(payload: &[u8; 13]) -> u8 {
        let mut sum = 0u32;
        for (from_right, b) in payload.iter().rev().enumerate() {
            let weight = if from_right % 2 == 0 { 3 } else { 1 };
            sum += u32::from(b - b'0') * weight;
        }
        ((10 - sum % 10) % 10) as u8
    }

    #[test]
    fn check_digit_known_vectors() {
        // Hand-checked against the GS1 algorithm.
        assert_eq!(gtin_check_digit("0401807768301").unwrap(), 5);
        assert_eq!(gtin_check_digit("0401807768671").unwrap(), 9);
        assert_eq!(gtin_check_digit("0871570001700").unwrap(), 6);
        assert_eq!(gtin_check_digit("0000008715721").unwrap(), 5);
        assert_eq!(gtin_check_digit("0000000000000").unwrap(), 0);
    }

    #[test]
    fn check_digit_matches_right_to_left_oracle() {
        let payloads = [
            *b"0401807768301",
            *b"0761303422908",
            *b"0000002400095",
            *b"9999999999999",
            *b"0000000000001",
            *b"1234567890123",
        ];
        for payload in payloads {
            let s = std::str::from_utf8(&payload).unwrap();
            assert_eq!(
                gtin_check_digit(s).unwrap(),
                check_digit_oracle(&payload),
                "payload {s}"
            );
        }
    }

    #[test]
    fn normalizes_by_left_padding() {
        assert_eq!(
            normalize_gtin("8715700017006").unwrap().as_str(),
            "08715700017006"
        );
        assert_eq!(
            normalize_gtin("24000952").unwrap().as_str(),
            "00000024000952"
        );
        assert_eq!(
            normalize_gtin("04018077683015").unwrap().as_str(),
            "04018077683015"
        );
        assert_eq!(
            normalize_gtin(" 87157215 ").unwrap().as_str(),
            "00000087157215"
        );
    }

    #[test]
    fn normalization_is_idempotent() {
        for raw in ["1", "24000952", "04018077683015", "87157215"] {
            let once = normalize_gtin(raw).unwrap();
            let twice = normalize_gtin(once.as_str()).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "",
            "  ",
            "123456789012345",
            "4018a77683015",
            "40180-7768",
            "4.0",
        ] {
            assert!(normalize_gtin(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn check_ok_flags_but_does_not_reject() {
        let valid = normalize_gtin("04018077683015").unwrap();
        assert!(valid.check_ok());
        let also_valid = normalize_gtin("00000087157215").unwrap();
        assert!(also_valid.check_ok());
        // Last digit off by one: still a usable value, just flagged.
        let invalid = normalize_gtin("04018077683014").unwrap();
        assert!(!invalid.check_ok());
    }

    #[test]
    fn serde_round_trips_and_accepts_integers() {
        let g = normalize_gtin("04018077683015").unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), "\"04018077683015\"");
        let back: Gtin = serde_json::from_str("\"04018077683015\"").unwrap();
        assert_eq!(back, g);
        // Some producers emit GTINs as JSON integers, which drops leading zeros.
        let from_int: Gtin = serde_json::from_str("4018077683015").unwrap();
        assert_eq!(from_int, g);
    }

    #[test]
    fn ordering_follows_digit_strings() {
        let a = normalize_gtin("1").unwrap();
        let b = normalize_gtin("2").unwrap();
        let c = normalize_gtin("10000000000000").unwrap();
        assert!(a < b && b < c);
    }
}
