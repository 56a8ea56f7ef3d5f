//! Seeded randomness.
//!
//! All randomness flows from ChaCha20 (`rand_chacha::ChaCha20Rng`). A base
//! seed selects the key via `seed_from_u64`; independent streams are selected
//! with `set_stream`, so per-cell draws do not depend on scheduling. Stream ids
//! for string-labelled cells are FNV-1a hashes of the labels.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

/// ChaCha20 keyed by `seed`, positioned on stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the labels, with a 0xff separator after each one.
pub fn stream_id(labels: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for label in labels {
        for &b in label.as_bytes().iter().chain(std::iter::once(&0xffu8)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Mixes a base seed with an integer salt (splitmix64 finalizer).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) from the top 53 bits of one `u64` draw.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal deviates by the Box-Muller transform.
///
/// Each pair of uniforms `u1, u2` (with `u1` mapped into (0, 1]) yields
/// `r cos(2 pi u2)` and then `r sin(2 pi u2)`, `r = sqrt(-2 ln u1)`.
#[derive(Debug, Default, Clone)]
pub struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample(&mut self, rng: &mut impl RngCore) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - unit_f64(rng);
        let u2 = unit_f64(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
