//! Counter-based random streams.
//!
//! Every `(seed, trial, lane)` triple addresses its own slice of a ChaCha8
//! keystream, so a trial's draws never depend on which worker ran it or on how
//! many other trials ran before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per lane inside one trial's stream.
const LANE_BITS: u32 = 36;

/// Consumer of a lane within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Frame-level draws: padding length and receiver noise.
    Frame,
    /// Reachability draws of the trial runner.
    Reachability,
    /// Offset and channel draws of one RIS, keyed by its ID.
    Ris(u32),
}

impl Lane {
    fn index(self) -> u128 {
        match self {
            Lane::Frame => 0,
            Lane::Reachability => 1,
            Lane::Ris(id) => 2 + u128::from(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStreams {
    seed: u64,
    trial: u64,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        Self { seed, trial }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn lane(&self, lane: Lane) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.trial);
        rng.set_word_pos(lane.index() << LANE_BITS);
        rng
    }
}
