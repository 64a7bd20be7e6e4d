//! Deterministic sub-generator derivation.
//!
//! Every stochastic step in a run draws from a ChaCha8 stream whose seed is
//! derived from the run seed by the rule below, so transcripts replay
//! identically regardless of execution interleaving.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for per-parent pipelines: seed = mix(run_seed, iteration, agent_id).
pub const STREAM_AGENT_STEP: u64 = 0x01;
/// Stream tag for world generation.
pub const STREAM_WORLD: u64 = 0x02;
/// Stream tag for robustness trials: seed = mix(tag, experiment_seed, trial, mode).
pub const STREAM_ROBUSTNESS: u64 = 0x03;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Absorb a sequence of words into one 64-bit seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// Fork the per-(iteration, agent) generator used by trace collection and
/// the scripted operators. First draw is the unsolved-task sample.
pub fn agent_step_rng(run_seed: u64, iteration: u32, agent_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[
        STREAM_AGENT_STEP,
        run_seed,
        iteration as u64,
        agent_id,
    ]))
}

/// Generator for world construction (integer draws only).
pub fn world_rng(world_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[STREAM_WORLD, world_seed]))
}
