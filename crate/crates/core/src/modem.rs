//! Gray-mapped QPSK.
//!
//! Bit pair `(b1, b0)` maps to `((1 - 2 b1) + (1 - 2 b0) i) / sqrt(2)`, so the
//! first bit lives on the real axis and the second on the imaginary axis.
//! Points on a decision boundary demap to bit 0.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// One spatially multiplexed symbol vector `s[i]`, unit energy per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolVector(Vec<C64>);

impl SymbolVector {
    pub fn new(symbols: Vec<C64>) -> Self {
        Self(symbols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }
}

#[inline]
pub fn map_pair(b1: u8, b0: u8) -> C64 {
    let re = if b1 == 0 { 1.0 } else { -1.0 };
    let im = if b0 == 0 { 1.0 } else { -1.0 };
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Maps `2 * n` bits onto `n` QPSK symbols.
pub fn modulate(bits: &[u8], n: usize) -> Result<SymbolVector> {
    if bits.len() != 2 * n {
        return Err(Error::LengthMismatch { expected: 2 * n, got: bits.len() });
    }
    Ok(SymbolVector(bits.chunks_exact(2).map(|p| map_pair(p[0], p[1])).collect()))
}

/// Hard quadrant decision.
#[inline]
pub fn demodulate(est: C64) -> [u8; 2] {
    [u8::from(est.re < 0.0), u8::from(est.im < 0.0)]
}

/// Hard-decides every estimate and re-maps it onto the constellation.
pub fn slice(est: &[C64]) -> Vec<C64> {
    est.iter()
        .map(|&z| {
            let [b1, b0] = demodulate(z);
            map_pair(b1, b0)
        })
        .collect()
}

pub fn count_bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize> {
    if tx.len() != rx.len() {
        return Err(Error::LengthMismatch { expected: tx.len(), got: rx.len() });
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| a != b).count())
}
