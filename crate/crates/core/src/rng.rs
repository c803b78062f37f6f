//! Named, seedable random streams.
//!
//! Every stochastic entity draws from its own ChaCha stream keyed by
//! `(seed, entity)`; the trial index selects the ChaCha stream id. Trial `t`
//! therefore sees the same channel no matter which estimator asks for it or
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    Message,
    StPhase,
    TrTaps,
    Noise,
}

impl Entity {
    fn tag(self) -> u64 {
        match self {
            Entity::Message => 0x6d73_6700,
            Entity::StPhase => 0x7374_7068,
            Entity::TrTaps => 0x7472_7470,
            Entity::Noise => 0x6e6f_6973,
        }
    }
}

pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, entity: Entity, trial: u64) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.seed ^ entity.tag().rotate_left(32);
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(trial);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
