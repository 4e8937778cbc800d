//! Order-independent seed derivation for Monte-Carlo trials.
//!
//! Every random draw in an experiment is keyed by `(master, trial, stream)`.
//! The derivation is a bijection of `trial·4 + stream` for a fixed master
//! seed (odd-constant multiply, add, SplitMix64 finaliser), so no two trial
//! streams share a seed and results never depend on scheduling.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Independent random streams drawn within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedStream {
    Phase = 0,
    Noise = 1,
    Scene = 2,
    Init = 3,
}

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `stream` of trial `trial` under `master`.
///
/// Distinct `(trial, stream)` pairs give distinct seeds for any
/// `trial < 2⁶²`.
pub fn monte_carlo_seed(master: u64, trial: u64, stream: SeedStream) -> u64 {
    let base = splitmix_finalize(master);
    let counter = trial.wrapping_mul(4).wrapping_add(stream as u64);
    splitmix_finalize(base.wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// Phase-schedule seed of panel `panel` within a trial.
pub fn panel_seed(master: u64, trial: u64, panel: u64) -> u64 {
    monte_carlo_seed(monte_carlo_seed(master, trial, SeedStream::Phase), panel, SeedStream::Phase)
}
