#![allow(dead_code)]

use scmil::data::{generate_synthetic_cohort, Cohort, SyntheticConfig};
use scmil::pipeline::RunConfig;

/// Small cohort that trains in well under a second per epoch.
pub fn tiny_cohort(n_patients: usize, seed: u64) -> Cohort {
    let cfg = SyntheticConfig {
        n_patients,
        patches_per_bag: (12, 30),
        d: 8,
        seed,
        ..SyntheticConfig::default()
    };
    let syn = generate_synthetic_cohort(&cfg).unwrap();
    Cohort::new(syn.records, syn.bags).unwrap()
}

pub fn tiny_config() -> RunConfig {
    RunConfig {
        heads: 2,
        components: 8,
        cluster_size: 8,
        epochs: 3,
        lr: 1e-3,
        threads: Some(1),
        ..RunConfig::default()
    }
}
