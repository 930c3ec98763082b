//! Shared inputs for the benchmarks.

use mixcopula::eval::presets::example1;
use mixcopula::model::generate;
use mixcopula::rng::stream;
use mixcopula::{MixedDataset, MixtureParams};

/// `n` rows drawn from the two-component reference mixture.
pub fn example_data(n: usize, seed: u64) -> (MixedDataset, MixtureParams) {
    let (schema, theta) = example1();
    let gen = generate(n, &theta, &schema, &mut stream(seed, &[])).expect("reference parameters are valid");
    (gen.data, theta)
}
