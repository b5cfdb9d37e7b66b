//! Deterministic random numbers shared by every generator in the crate.
//!
//! All randomness comes from SplitMix64 (Steele, Lea & Flood, 2014): a 64-bit
//! state advanced by the golden-ratio increment `0x9E3779B97F4A7C15` and
//! finalized with the `mix64` variant-13 mixer. The sequence is fixed, so any
//! implementation in any language reproduces it bit for bit.
//!
//! Derived quantities:
//!
//! * **streams**: [`SplitMix64::stream`]`(seed, i)` starts from
//!   `mix64(seed ^ mix64(i + 0x9E3779B97F4A7C15))`. Independent consumers
//!   (planted partition, sample `l`, image `i`) use distinct stream indices.
//! * **uniform in [0,1)**: `(next_u64() >> 11) * 2^-53`.
//! * **uniform in (0,1]**: `((next_u64() >> 11) + 1) * 2^-53`.
//! * **integer below n**: the high word of `next_u64() * n` (128-bit product).
//! * **standard normal**: Box-Muller on two `(0,1]` draws `u1, u2`, yielding
//!   `sqrt(-2 ln u1) cos(2 pi u2)` then `sqrt(-2 ln u1) sin(2 pi u2)`.
//! * **shuffle**: Fisher-Yates from the last position down, `j = below(i + 1)`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Starting state of stream `index` of a master `seed`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(GOLDEN)))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_normal: None,
        }
    }

    /// Generator for stream `index` of a master `seed`.
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::new(stream_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform_open_zero(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_zero();
        let u2 = self.uniform_open_zero();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
