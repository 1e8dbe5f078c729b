//! Counter-based, path-keyed randomness.
//!
//! A [`RngKey`] names a structural position in a simulation (the vertex
//! process, the star process of vertex `j`, the edge variable of the pair
//! `{i, j}`, replicate `n` of an experiment...). Each key owns an independent
//! stream produced by Philox4x32-10 with a key and counter derived from the
//! root seed and the path, so the same `(seed, path)` always reproduces the
//! same numbers and no two positions share state.

use std::fmt;

/// Path labels used by this crate. Labels are small integers; callers may
/// use their own values above `USER`.
pub mod label {
    pub const VERTICES: u16 = 1;
    pub const STAR: u16 = 2;
    pub const DUST: u16 = 3;
    pub const PAIR: u16 = 4;
    pub const REPLICATE: u16 = 5;
    pub const SKEW: u16 = 6;
    pub const MIXTURE: u16 = 7;
    pub const EXPERIMENT: u16 = 8;
    pub const PROBE: u16 = 9;
    pub const USER: u16 = 256;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold(digest: [u64; 2], step: (u16, u64)) -> [u64; 2] {
    let (label, index) = step;
    let tag = mix64((label as u64).wrapping_add(GOLDEN));
    let a = mix64(digest[0] ^ tag).wrapping_add(mix64(index ^ 0x5851_F42D_4C95_7F2D));
    let b = mix64(digest[1].rotate_left(17) ^ tag ^ index.wrapping_mul(GOLDEN));
    [mix64(a), mix64(b ^ a)]
}

/// Root seed plus a path of `(label, index)` steps.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RngKey {
    seed: u64,
    path: Vec<(u16, u64)>,
    digest: [u64; 2],
}

impl RngKey {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
            digest: [mix64(seed), mix64(seed ^ 0xD1B5_4A32_D192_ED03)],
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[(u16, u64)] {
        &self.path
    }

    pub fn child(&self, label: u16, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((label, index));
        Self {
            seed: self.seed,
            path,
            digest: fold(self.digest, (label, index)),
        }
    }

    pub fn stream(&self) -> Stream {
        Stream::from_digest(self.digest)
    }

    /// Stream of the descendant at `steps` without materialising the child keys.
    pub fn stream_at(&self, steps: &[(u16, u64)]) -> Stream {
        Stream::from_digest(steps.iter().fold(self.digest, |d, s| fold(d, *s)))
    }

    /// The edge uniform `U_{i,j}` keyed by the unordered pair, so that
    /// `pair_uniform(i, j) == pair_uniform(j, i)`.
    pub fn pair_uniform(&self, i: u64, j: u64) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.stream_at(&[(label::PAIR, lo), (label::PAIR, hi)]).next_f64()
    }
}

impl fmt::Debug for RngKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RngKey({}", self.seed)?;
        for (l, i) in &self.path {
            write!(f, "/{l}:{i}")?;
        }
        f.write_str(")")
    }
}

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
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

/// Sequential view of one key's counter space.
#[derive(Debug, Clone)]
pub struct Stream {
    key: [u32; 2],
    nonce: [u32; 2],
    block: u64,
    buf: [u32; 4],
    used: usize,
}

impl Stream {
    fn from_digest(d: [u64; 2]) -> Self {
        Self {
            key: [d[0] as u32, (d[0] >> 32) as u32],
            nonce: [d[1] as u32, (d[1] >> 32) as u32],
            block: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    fn refill(&mut self) {
        let ctr = [self.block as u32, (self.block >> 32) as u32, self.nonce[0], self.nonce[1]];
        self.buf = philox4x32(ctr, self.key);
        self.block += 1;
        self.used = 0;
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }
}
