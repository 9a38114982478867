//! SimHash encoding of screen names.
//!
//! 64-bit SimHash over character 3-grams with a fixed seed, reinterpreted as
//! an unsigned integer and affinely mapped to `[-1, 1]`. Names are padded
//! with sentinel boundary characters so single-character names still produce
//! one 3-gram.

use crate::error::{Error, Result};
use crate::Real;

/// Fixed seed folded into the per-gram hash; part of the file-format contract.
pub const SIMHASH_SEED: u64 = 0x5EED_1D5A_F00D_CAFE;

const BOUNDARY_START: char = '\u{2}';
const BOUNDARY_END: char = '\u{3}';

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// 64-bit SimHash fingerprint of the name's character 3-grams.
pub fn simhash64(name: &str) -> u64 {
    let mut chars: Vec<char> = Vec::with_capacity(name.chars().count() + 2);
    chars.push(BOUNDARY_START);
    chars.extend(name.chars());
    chars.push(BOUNDARY_END);

    let mut counts: Vec<i64> = vec![0; 64];
    let mut buf = String::new();
    for gram in chars.windows(3) {
        buf.clear();
        buf.extend(gram);
        let h = mix(fnv1a64(buf.as_bytes()) ^ SIMHASH_SEED);
        for (bit, count) in counts.iter_mut().enumerate() {
            if (h >> bit) & 1 == 1 {
                *count += 1;
            } else {
                *count -= 1;
            }
        }
    }

    let mut fingerprint = 0u64;
    for (bit, &count) in counts.iter().enumerate() {
        if count > 0 {
            fingerprint |= 1 << bit;
        }
    }
    fingerprint
}

/// Deterministic numeric encoding of a screen name in `[-1, 1]`.
pub fn encode_screen_name(name: &str) -> Result<Real> {
    if name.is_empty() {
        return Err(Error::InvalidArgument("empty screen name".into()));
    }
    let u = simhash64(name);
    Ok((u as f64 / u64::MAX as f64) * 2.0 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line SimHash recomputation over the 3-gram multiset.
    fn simhash_oracle(name: &str) -> u64 {
        let padded: Vec<char> = std::iter::once(BOUNDARY_START)
            .chain(name.chars())
            .chain(std::iter::once(BOUNDARY_END))
            .collect();
        let mut grams: Vec<String> = Vec::new();
        for w in padded.windows(3) {
            grams.push(w.iter().collect());
        }
        let mut fp = 0u64;
        for bit in 0..64 {
            let mut sum = 0i64;
            for g in &grams {
                let h = mix(fnv1a64(g.as_bytes()) ^ SIMHASH_SEED);
                sum += if (h >> bit) & 1 == 1 { 1 } else { -1 };
            }
            if sum > 0 {
                fp |= 1 << bit;
            }
        }
        fp
    }

    #[test]
    fn deterministic() {
        for name in ["alice", "شخص", "a", "bob_the_builder42"] {
            assert_eq!(encode_screen_name(name).unwrap(), encode_screen_name(name).unwrap());
        }
    }

    #[test]
    fn matches_bruteforce_oracle() {
        for name in ["alice", "alicia", "x", "privacy_matters", "东风"] {
            assert_eq!(simhash64(name), simhash_oracle(name), "name {name:?}");
        }
    }

    #[test]
    fn single_char_in_range() {
        let v = encode_screen_name("a").unwrap();
        assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn similar_names_have_small_hamming_distance() {
        let pairs = [
            ("jonathan_smith_1988", "jonathan_smith_1989"),
            ("privacy_preserving", "privacy_preservinh"),
            ("longscreennamewithmanychars", "longscreennamewithmanychars2"),
        ];
        for (a, b) in pairs {
            let d = (simhash64(a) ^ simhash64(b)).count_ones();
            assert!(d <= 24, "hamming({a:?}, {b:?}) = {d}");
        }
        // Unrelated names should sit near 32 bits apart.
        let far = (simhash64("jonathan_smith_1988") ^ simhash64("zzz_unrelated_account")).count_ones();
        assert!(far >= 16, "far pair unexpectedly close: {far}");
    }

    #[test]
    fn empty_name_is_an_error() {
        assert!(encode_screen_name("").is_err());
    }
}
