//! One global seed fans out into independent ChaCha streams, one per
//! consumer, so the draw order of one component never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Random streams consumed by a training run.
#[derive(Clone, Debug)]
pub struct RngStreams {
    pub init: ChaCha8Rng,
    pub critic_batch: ChaCha8Rng,
    pub actor_batch: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub priority: ChaCha8Rng,
    pub eval: ChaCha8Rng,
    pub probe: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            init: stream(seed, 1),
            critic_batch: stream(seed, 2),
            actor_batch: stream(seed, 3),
            policy: stream(seed, 4),
            priority: stream(seed, 5),
            eval: stream(seed, 6),
            probe: stream(seed, 7),
        }
    }
}
