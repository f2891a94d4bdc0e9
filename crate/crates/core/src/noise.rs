//! Counter-based Gaussian noise.
//!
//! Every standard normal variate is addressed by `(seed, chain, tag, index)`
//! and computed from a single Philox4x32-10 block, so any variate can be
//! regenerated without replaying the stream. Block `b` yields the pair of
//! variates `2b` and `2b + 1` through the Box–Muller transform.
//!
//! The integer stream is exactly Philox4x32-10 (Salmon et al., SC'11) with
//! key `(seed_lo, seed_hi)` and counter `(b_lo, b_hi, chain, tag)`. The float
//! transform uses the platform `ln`/`sin`/`cos`, so bit-identical variates
//! are only guaranteed on a fixed platform and toolchain.

use std::f64::consts::TAU;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let prod = u64::from(a) * u64::from(b);
    ((prod >> 32) as u32, prod as u32)
}

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
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

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Addressable stream of i.i.d. `N(0, 1)` variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    seed: u64,
    chain: u32,
    tag: u32,
}

impl NoiseStream {
    pub fn new(seed: u64, chain: u32) -> Self {
        Self { seed, chain, tag: 0 }
    }

    /// Independent stream sharing seed and chain, used for auxiliary
    /// randomness (e.g. one tag per refinement level).
    pub fn substream(&self, tag: u32) -> Self {
        Self { tag, ..*self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain(&self) -> u32 {
        self.chain
    }

    pub fn tag(&self) -> u32 {
        self.tag
    }

    /// Raw Philox output for block `block`.
    #[inline]
    pub fn block(&self, block: u64) -> [u32; 4] {
        philox4x32_10(
            [block as u32, (block >> 32) as u32, self.chain, self.tag],
            [self.seed as u32, (self.seed >> 32) as u32],
        )
    }

    /// Variates `2·block` and `2·block + 1`.
    #[inline]
    pub fn normal_pair(&self, block: u64) -> (f64, f64) {
        let r = self.block(block);
        let a = (u64::from(r[0]) << 32) | u64::from(r[1]);
        let b = (u64::from(r[2]) << 32) | u64::from(r[3]);
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (b >> 11) as f64 * TWO_POW_M53;
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        (radius * c, radius * s)
    }

    /// The variate at `index`.
    pub fn normal(&self, index: u64) -> f64 {
        let (a, b) = self.normal_pair(index / 2);
        if index & 1 == 0 {
            a
        } else {
            b
        }
    }

    /// Fills `out` with variates `start, start + 1, …`.
    pub fn fill(&self, start: u64, out: &mut [f64]) {
        let mut cursor = NormalCursor::at(*self, start);
        cursor.fill(out);
    }

    pub fn cursor(&self) -> NormalCursor {
        NormalCursor::at(*self, 0)
    }
}

/// Sequential reader over a [`NoiseStream`] that uses both variates of
/// each Box–Muller pair.
#[derive(Debug, Clone)]
pub struct NormalCursor {
    stream: NoiseStream,
    next: u64,
    pending: Option<f64>,
}

impl NormalCursor {
    pub fn at(stream: NoiseStream, index: u64) -> Self {
        let pending = (index % 2 == 1).then(|| stream.normal_pair(index / 2).1);
        Self { stream, next: index, pending }
    }

    /// Index of the next variate to be returned.
    pub fn position(&self) -> u64 {
        self.next
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let value = match self.pending.take() {
            Some(v) => v,
            None => {
                let (a, b) = self.stream.normal_pair(self.next / 2);
                self.pending = Some(b);
                a
            }
        };
        self.next += 1;
        value
    }

    #[inline]
    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32_10([0; 4], [0; 2]), [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]);
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10([0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344], [0xa4093822, 0x299f31d0]),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn addressing_is_consistent() {
        let s = NoiseStream::new(42, 3);
        let mut seq = vec![0.0; 11];
        s.fill(0, &mut seq);
        for (i, v) in seq.iter().enumerate() {
            assert_eq!(v.to_bits(), s.normal(i as u64).to_bits());
        }
        let mut tail = vec![0.0; 6];
        s.fill(5, &mut tail);
        assert_eq!(&tail[..], &seq[5..]);
        assert_eq!(NoiseStream::new(42, 3).normal(7), s.normal(7));
    }

    #[test]
    fn streams_are_distinct() {
        let a = NoiseStream::new(1, 0);
        assert_ne!(a.normal(0), NoiseStream::new(1, 1).normal(0));
        assert_ne!(a.normal(0), NoiseStream::new(2, 0).normal(0));
        assert_ne!(a.normal(0), a.substream(1).normal(0));
    }

    #[test]
    fn moments_and_cross_correlation() {
        let n = 200_000u64;
        let (a, b) = (NoiseStream::new(7, 0), NoiseStream::new(7, 1));
        let (mut ca, mut cb) = (a.cursor(), b.cursor());
        let (mut s1, mut s2, mut s4, mut sab) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = (ca.next_normal(), cb.next_normal());
            s1 += x;
            s2 += x * x;
            s4 += x * x * x * x;
            sab += x * y;
        }
        let nf = n as f64;
        let se = 1.0 / nf.sqrt();
        assert!((s1 / nf).abs() < 5.0 * se);
        assert!((s2 / nf - 1.0).abs() < 5.0 * 2f64.sqrt() * se);
        assert!((s4 / nf - 3.0).abs() < 5.0 * 96f64.sqrt() * se);
        assert!((sab / nf).abs() < 5.0 * se);
    }
}
