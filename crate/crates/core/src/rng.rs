//! Reproducible random streams keyed by purpose, stage and particle.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; distinct purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Parent = 1,
    Proposal = 2,
    Mcmc = 3,
    McmcExtra = 4,
    Probe = 5,
    McmcProbe = 6,
    Resample = 7,
}

/// The stream for `(purpose, stage, index)` under a run seed.
pub fn stream(seed: u64, purpose: Purpose, stage: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | ((stage as u64 & 0xFF_FFFF) << 32) | (index as u64 & 0xFFFF_FFFF));
    rng
}
