//! Patch bags, cohort manifests and the synthetic cohort generator.

mod bag;
mod manifest;
mod synthetic;

pub use bag::{decode_bag, encode_bag, load_bag, write_bag, PatchBag, BAG_MAGIC, BAG_VERSION};
pub use manifest::{days_to_years, load_manifest, write_manifest, Cohort, CohortRecord, DAYS_PER_YEAR};
pub use synthetic::{generate_synthetic_cohort, write_cohort, SyntheticCohort, SyntheticConfig};
