//! Counter-based random streams.
//!
//! A stream is identified by `(seed, stream_id)`. The ChaCha block counter is
//! the per-stream position, and the stream id selects the ChaCha nonce, so
//! replicate `i` draws the same numbers whatever thread runs it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        RngStream { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent stream for a sub-task of this replicate (e.g. the
    /// environment vs. the driving Brownian motion). Derived from the seed and
    /// the tag only, never from the current position.
    pub fn fork(&self, tag: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(tag.wrapping_add(1))), self.stream_id)
    }

    /// Uniform on (0, 1].
    pub fn open01(&mut self) -> f64 {
        // 53 random bits, shifted away from zero
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_stream_same_numbers() {
        let a: Vec<u64> = (0..16).map({
            let mut r = RngStream::new(7, 3);
            move |_| r.next_u64()
        }).collect();
        let mut r = RngStream::new(7, 3);
        let b: Vec<u64> = (0..16).map(|_| r.next_u64()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let mut c = a.fork(1);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn open01_bounds() {
        let mut r = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let u = r.open01();
            assert!(u > 0.0 && u <= 1.0);
        }
        let m: f64 = (0..100_000).map(|_| r.random::<f64>()).sum::<f64>() / 1e5;
        assert!((m - 0.5).abs() < 0.005);
    }
}
