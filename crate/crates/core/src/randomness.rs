//! Seedable field of independent uniforms `U_ij(t)`.
//!
//! Every simulator draws its randomness from a [`UniformField`], indexed by
//! cell, channel and time rather than consumed as a stream. Two simulators
//! given the same field therefore see the same uniforms no matter in which
//! order they evaluate them, which is what makes the sample-path couplings
//! exact.
//!
//! Channel 0 of cell `i` decides arrivals to queue `i`; channel `j + 1`
//! decides whether a type-`j` vehicle leaves cell `i`.
//!
//! The generator is Philox4x32 with 10 rounds. The 128-bit counter is
//! `(t_lo, t_hi, cell, channel)` and the 64-bit key is the seed. Outputs of
//! this version are pinned by the known-answer tests below.

use crate::error::{Error, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let product = u64::from(a) * u64::from(b);
    ((product >> 32) as u32, product as u32)
}

/// Philox4x32-10 block function.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Deterministic field of uniforms on the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformField {
    seed: u64,
    ring_size: usize,
}

impl UniformField {
    pub fn new(seed: u64, ring_size: usize) -> Self {
        Self { seed, ring_size }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ring_size(&self) -> usize {
        self.ring_size
    }

    /// Checked access; `channel` ranges over `0..=L`.
    pub fn uniform(&self, cell: usize, channel: usize, t: u64) -> Result<f64> {
        if cell >= self.ring_size {
            return Err(Error::IndexOutOfRange {
                what: "cell",
                index: cell,
                bound: self.ring_size,
            });
        }
        if channel > self.ring_size {
            return Err(Error::IndexOutOfRange {
                what: "channel",
                index: channel,
                bound: self.ring_size + 1,
            });
        }
        Ok(self.u(cell, channel, t))
    }

    /// Unchecked access used on the simulation hot path.
    #[inline]
    pub fn u(&self, cell: usize, channel: usize, t: u64) -> f64 {
        debug_assert!(cell < self.ring_size && channel <= self.ring_size);
        let out = philox4x32(
            [t as u32, (t >> 32) as u32, cell as u32, channel as u32],
            [self.seed as u32, (self.seed >> 32) as u32],
        );
        let bits = (u64::from(out[0]) << 32) | u64::from(out[1]);
        // 53 random bits centred in their cell: never 0, never 1
        ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// `U_i0(t)`: arrival draw for queue `cell`.
    #[inline]
    pub fn arrival(&self, cell: usize, t: u64) -> f64 {
        self.u(cell, 0, t)
    }

    /// `U_ij(t)`: departure draw for a type-`ty` vehicle in `cell`.
    #[inline]
    pub fn departure(&self, cell: usize, ty: usize, t: u64) -> f64 {
        self.u(cell, ty + 1, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors of the Random123 distribution for Philox4x32-10.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn deterministic_and_open_interval() {
        let field = UniformField::new(42, 3);
        for t in 0..1000 {
            for cell in 0..3 {
                for channel in 0..4 {
                    let a = field.u(cell, channel, t);
                    assert_eq!(a, field.u(cell, channel, t));
                    assert!(a > 0.0 && a < 1.0);
                }
            }
        }
    }

    #[test]
    fn checked_access_rejects_bad_indices() {
        let field = UniformField::new(0, 2);
        assert!(field.uniform(1, 2, 5).is_ok());
        assert!(matches!(
            field.uniform(2, 0, 0),
            Err(Error::IndexOutOfRange { what: "cell", .. })
        ));
        assert!(matches!(
            field.uniform(0, 3, 0),
            Err(Error::IndexOutOfRange { what: "channel", .. })
        ));
    }

    #[test]
    fn neighbouring_seeds_differ() {
        let a = UniformField::new(7, 4);
        let b = UniformField::new(8, 4);
        let mut differ = 0;
        let mut total = 0;
        for t in 0..500u64 {
            for cell in 0..4 {
                for channel in 0..5 {
                    total += 1;
                    if a.u(cell, channel, t) != b.u(cell, channel, t) {
                        differ += 1;
                    }
                }
            }
        }
        assert!(total >= 10_000);
        assert!(differ as f64 >= 0.99 * total as f64);
    }
}
