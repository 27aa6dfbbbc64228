//! Counter-based random streams.
//!
//! Every random draw belongs to a stream keyed by (seed, shot, channel,
//! stage). Streams are independent ChaCha8 sequences, so results do not
//! depend on the order in which shots are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channel slot used for draws that belong to the shared feedline.
pub const FEEDLINE_CHANNEL: usize = 0xFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Stage {
    ThermalInit = 0,
    HeraldTrajectory = 1,
    Pulse = 2,
    ReadoutTrajectory = 3,
    HeraldNoise = 4,
    ReadoutNoise = 5,
    FastHeraldNoise = 6,
    FastReadoutNoise = 7,
    Ramsey = 8,
    TraceNoise = 9,
    Outcome = 10,
}

pub fn stream_rng(seed: u64, shot: u64, channel: usize, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((shot << 16) | ((channel as u64 & 0xFF) << 8) | stage as u64);
    rng
}
