//! Per-instance seeds.
//!
//! `seed = mix(mix(mix(mix(base) ^ experiment) ^ sweep_index) ^ rep_index)`,
//! where `mix` is the SplitMix64 finaliser applied to `x + 0x9E3779B97F4A7C15`.
//! The derivation is part of the output format: changing it changes every
//! published CSV.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn chain(parts: &[u64]) -> u64 {
    parts.iter().skip(1).fold(splitmix64(parts[0]), |h, &p| splitmix64(h ^ p))
}

/// Seed of repetition `rep` at sweep point `sweep_index`.
pub fn instance_seed(base: u64, experiment: u64, sweep_index: u64, rep: u64) -> u64 {
    chain(&[base, experiment, sweep_index, rep])
}

/// Seed of the support realisation shared by a whole experiment.
pub fn support_seed(base: u64, experiment: u64) -> u64 {
    chain(&[base, experiment, u64::MAX])
}
