//! Finite-field arithmetic for the codec.
//!
//! Two field modes are supported: GF(2^8) with primitive polynomial
//! x^8 + x^4 + x^3 + x^2 + 1 (0x11D), and a GF(2) XOR-only mode in which
//! coding coefficients are restricted to {0, 1}. Addition is bytewise XOR
//! in both modes. GF(2^8) multiplication and inversion go through
//! compile-time log/antilog tables (generator 2, order 255).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduction polynomial for GF(2^8): x^8 + x^4 + x^3 + x^2 + 1.
pub const REDUCTION_POLY: u16 = 0x11D;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum FieldError {
    #[error("multiplicative inverse of zero is undefined")]
    ZeroInverse,
    #[error("value {value:#04x} is not an element of {field}")]
    InvalidElement { field: FieldKind, value: u8 },
}

/// Which field the codec operates in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    /// GF(2): coefficients in {0, 1}, encode/decode degenerate to XOR.
    Binary,
    /// GF(2^8) under the 0x11D polynomial.
    Gf256,
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldKind::Binary => write!(f, "gf2"),
            FieldKind::Gf256 => write!(f, "gf256"),
        }
    }
}

impl FieldKind {
    /// Field addition: bytewise XOR in both modes.
    #[inline]
    pub fn add(self, a: u8, b: u8) -> u8 {
        a ^ b
    }

    /// Field multiplication.
    ///
    /// In binary mode the coefficient operand must be 0 or 1; payload bytes
    /// are treated as eight parallel GF(2) symbols, so multiplying by 1 is
    /// the identity on the whole byte.
    #[inline]
    pub fn mul(self, a: u8, b: u8) -> u8 {
        match self {
            FieldKind::Binary => match (a, b) {
                (0, _) | (_, 0) => 0,
                (1, x) | (x, 1) => x,
                // Unreachable for validated inputs; lane-wise AND is the
                // GF(2) product when both bytes carry packed symbols.
                (x, y) => x & y,
            },
            FieldKind::Gf256 => gf256::mul(a, b),
        }
    }

    /// Multiplicative inverse; zero has none.
    #[inline]
    pub fn inv(self, a: u8) -> Result<u8, FieldError> {
        if a == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(match self {
            FieldKind::Binary => 1,
            FieldKind::Gf256 => gf256::inv(a),
        })
    }

    /// Checks that `a` is a coefficient of this field.
    pub fn validate_coefficient(self, a: u8) -> Result<(), FieldError> {
        match self {
            FieldKind::Binary if a > 1 => Err(FieldError::InvalidElement {
                field: self,
                value: a,
            }),
            _ => Ok(()),
        }
    }

    /// Draws a uniformly random nonzero coefficient.
    pub fn random_nonzero<R: rand::Rng + ?Sized>(self, rng: &mut R) -> u8 {
        match self {
            FieldKind::Binary => 1,
            FieldKind::Gf256 => rng.random_range(1..=255u8),
        }
    }
}

/// Table-based GF(2^8) arithmetic.
pub mod gf256 {
    use super::REDUCTION_POLY;

    const fn gen_tables() -> ([u8; 256], [u8; 512]) {
        let mut log = [0u8; 256];
        let mut exp = [0u8; 512];
        let mut x: u16 = 1;
        let mut i = 0usize;
        while i < 255 {
            exp[i] = x as u8;
            exp[i + 255] = x as u8; // duplicated so mul can skip the mod 255
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= REDUCTION_POLY;
            }
            i += 1;
        }
        (log, exp)
    }

    const TABLES: ([u8; 256], [u8; 512]) = gen_tables();
    const LOG: [u8; 256] = TABLES.0;
    const EXP: [u8; 512] = TABLES.1;

    #[inline]
    pub fn mul(a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
    }

    /// Inverse of a nonzero element. Caller guarantees `a != 0`.
    #[inline]
    pub fn inv(a: u8) -> u8 {
        debug_assert!(a != 0);
        EXP[255 - LOG[a as usize] as usize]
    }
}
