//! Deterministic random streams.
//!
//! Every randomized component draws from a substream derived from one master
//! seed plus a domain tag and record indices. Substreams are independent of
//! each other and of iteration order, so per-record work could be scheduled in
//! any order (or in parallel) without changing the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives independent substreams from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Mixes the tag and indices into a 64-bit stream key.
    fn key(&self, tag: &str, indices: &[u64]) -> u64 {
        let mut state = self.master ^ 0x6A09_E667_F3BC_C908;
        for chunk in tag.as_bytes().chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            state ^= u64::from_le_bytes(word);
            splitmix64(&mut state);
        }
        state ^= (tag.len() as u64) << 1 | 1;
        splitmix64(&mut state);
        for &ix in indices {
            state ^= ix;
            splitmix64(&mut state);
        }
        state
    }

    /// Substream for `(tag, indices)`; same arguments always yield the same stream.
    pub fn stream(&self, tag: &str, indices: &[u64]) -> ChaCha8Rng {
        let mut state = self.key(tag, indices);
        let mut seed = [0u8; 32];
        for word in seed.chunks_mut(8) {
            word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// Child tree, for components that hand out their own substreams.
    pub fn child(&self, tag: &str, index: u64) -> SeedTree {
        SeedTree {
            master: self.key(tag, &[index]),
        }
    }
}

/// Laplace(0, scale) draw by inverse CDF.
pub fn sample_laplace<R: rand::Rng>(rng: &mut R, scale: f64) -> f64 {
    // u in [-0.5, 0.5); rejects the single point that would hit ln(0).
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        if u > -0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}
