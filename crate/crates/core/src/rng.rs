//! Counter-based pseudo-random generator for reproducible Monte Carlo.
//!
//! Implements the Philox-4x64-10 block function. Randomness is a pure
//! function of (key, counter), so independent realizations take
//! non-overlapping counter streams derived from a master seed and never
//! contend: realization k uses counter word 1 = k and draws advance counter
//! word 0. Identical (seed, stream) always reproduces the identical
//! sequence, bit for bit, on every platform.

/// Algorithm identifier recorded in run manifests.
pub const RNG_ALGORITHM: &str = "philox4x64-10";

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// One 10-round Philox-4x64 block: (counter, key) -> 4 output words.
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut ctr = counter;
    let mut key = key;
    for _ in 0..10 {
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
        key[0] = key[0].wrapping_add(PHILOX_W0);
        key[1] = key[1].wrapping_add(PHILOX_W1);
    }
    ctr
}

/// A stream of random numbers for one realization index.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: [u64; 2],
    /// counter = [draw block, stream id, domain tag, 0]
    counter: [u64; 4],
    buf: [u64; 4],
    buf_pos: usize,
    gauss_spare: Option<f64>,
}

impl RngStream {
    /// Stream `stream` of the generator seeded with `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        Self::with_domain(seed, stream, 0)
    }

    /// Like [`RngStream::new`] with an extra domain tag, so different uses
    /// (e.g. optical vs spin noise) get disjoint streams from one seed.
    pub fn with_domain(seed: u64, stream: u64, domain: u64) -> Self {
        Self {
            key: [seed, seed ^ PHILOX_W1],
            counter: [0, stream, domain, 0],
            buf: [0; 4],
            buf_pos: 4,
            gauss_spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.buf_pos == 4 {
            self.buf = philox4x64(self.counter, self.key);
            self.counter[0] = self.counter[0].wrapping_add(1);
            self.buf_pos = 0;
        }
        let x = self.buf[self.buf_pos];
        self.buf_pos += 1;
        x
    }

    /// Uniform double in (0, 1], using the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via the Box-Muller transform.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.gauss_spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.gauss_spare = Some(r * s);
        r * c
    }
}
