//! Counter-based random numbers.
//!
//! Every uniform used by a simulation is a pure function of
//! `(master_seed, replicate, step)`, computed with Philox4x32-10. There is
//! no generator state to split or advance, so a replicate produces the same
//! path no matter which worker runs it or in which order.

use serde::{Deserialize, Serialize};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// The Philox4x32 block function with 10 rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox4x32 {
    key: [u32; 2],
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

impl Philox4x32 {
    pub fn new(key: [u32; 2]) -> Self {
        Self { key }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new([seed as u32, (seed >> 32) as u32])
    }

    #[inline]
    pub fn block(&self, mut ctr: [u32; 4]) -> [u32; 4] {
        let mut key = self.key;
        for round in 0..10 {
            if round > 0 {
                key[0] = key[0].wrapping_add(PHILOX_W0);
                key[1] = key[1].wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
            ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
        }
        ctr
    }
}

/// Identifies the random stream of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replicate: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, replicate: u64) -> Self {
        Self {
            master_seed,
            replicate,
        }
    }

    pub fn stream(&self) -> UniformStream {
        UniformStream {
            philox: Philox4x32::from_seed(self.master_seed),
            replicate: self.replicate,
        }
    }
}

/// Random access to the `(u, v)` pairs of one replicate.
#[derive(Debug, Clone, Copy)]
pub struct UniformStream {
    philox: Philox4x32,
    replicate: u64,
}

/// Maps the top 53 bits of `bits` to `[0, 1)`.
#[inline(always)]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl UniformStream {
    /// The two uniforms consumed by step `step` (1-based in the simulator).
    #[inline]
    pub fn pair(&self, step: u64) -> (f64, f64) {
        let out = self.philox.block([
            step as u32,
            (step >> 32) as u32,
            self.replicate as u32,
            (self.replicate >> 32) as u32,
        ]);
        let a = u64::from(out[0]) | (u64::from(out[1]) << 32);
        let b = u64::from(out[2]) | (u64::from(out[3]) << 32);
        (unit_f64(a), unit_f64(b))
    }
}
