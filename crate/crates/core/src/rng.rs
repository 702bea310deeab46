//! Seeded random streams with stable, collision-resistant labeling.
//!
//! The simulator never shares one sequential RNG across subsystems. Each
//! consumer derives its own stream from the run seed plus a label path, so
//! adding draws in one place cannot shift the values seen anywhere else.
//! Link-delivery draws go one step further and are keyed per individual
//! event ([`unit`]), which gives ablation variants common random numbers:
//! PBFT and S-PBFT compare the same uniform draw against different success
//! probabilities, making their energy ordering structural.
//!
//! The mixer is SplitMix64, chained over the label parts. It is not
//! cryptographic; it only needs to decorrelate streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Label-path roots, one per consumer. Frozen: renumbering any of these
/// moves every draw keyed beneath it and breaks seed reproducibility.
pub mod tags {
    /// Per-link, per-attempt message delivery trials.
    pub const DELIVERY: u64 = 1;
    /// Node placement and kind assignment.
    pub const TOPOLOGY: u64 = 2;
    /// Attacker selection.
    pub const ATTACK: u64 = 3;
    /// Per-epoch node movement.
    pub const MOBILITY: u64 = 4;
    /// Per-epoch service demand arrivals.
    pub const DEMAND: u64 = 5;
    /// Account signing secrets.
    pub const SECRET: u64 = 6;
    /// Initial node reputations.
    pub const REPUTATION: u64 = 7;
    /// Per-chain view counter folded into round seeds, so a rerun of a
    /// height that failed to commit faces fresh channel draws.
    pub const VIEW: u64 = 8;
}

/// SplitMix64 finalizer. Bijective on u64, strong avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into one well-mixed u64. Order-sensitive, so
/// `mix(&[a, b]) != mix(&[b, a])` in general.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3; // pi fraction, arbitrary non-zero start
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// Dedicated deterministic stream for one subsystem.
///
/// `tags` is the label path, e.g. `[TOPOLOGY]` or `[MOBILITY, epoch]`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut parts = Vec::with_capacity(tags.len() + 1);
    parts.push(seed);
    parts.extend_from_slice(tags);
    ChaCha8Rng::seed_from_u64(mix(&parts))
}

/// One keyed uniform draw in `[0, 1)`.
///
/// Used for per-event Bernoulli trials where the key, not a stream
/// position, identifies the event.
pub fn unit(seed: u64, tags: &[u64]) -> f64 {
    let mut parts = Vec::with_capacity(tags.len() + 1);
    parts.push(seed);
    parts.extend_from_slice(tags);
    // 53 high-quality bits, same construction rand uses for open ranges.
    (mix(&parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    // The mixer is part of the deterministic contract: changing it would
    // silently move every seeded result in the test suite. Pin it.
    #[test]
    fn mix_values_are_frozen() {
        assert_eq!(mix(&[0]), 0x2cb0_f69f_4abe_a221);
        assert_eq!(mix(&[1, 2, 3]), 0xcd8d_7059_9191_4ea1);
        assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
    }

    #[test]
    fn unit_is_in_half_open_range() {
        for i in 0..10_000 {
            let u = unit(42, &[7, i]);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn streams_with_different_tags_diverge() {
        let a: u64 = stream(1, &[10]).random();
        let b: u64 = stream(1, &[11]).random();
        let a2: u64 = stream(1, &[10]).random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }
}
