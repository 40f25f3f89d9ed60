//! Random streams, the critical offspring law and stable increments.

mod offspring;
mod stable;
mod stream;

pub use offspring::{offspring_pmf, OffspringLaw, DEFAULT_TABLE_SIZE};
pub use stable::{sample_stable_increment, StableParams, StableSampler};
pub use stream::{make_streams, RngStream};

/// One draw from the offspring law.
pub fn sample_offspring(stream: &mut RngStream, law: &OffspringLaw) -> u64 {
    law.sample(stream)
}
