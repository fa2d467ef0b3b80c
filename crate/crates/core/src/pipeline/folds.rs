use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::CohortRecord;
use crate::error::{Error, Result};

use super::seeds::{derive_seed, TAG_FOLDS};

/// Train/test partition for one cross-validation fold, as cohort indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldSplit {
    /// Fails if any test patient also appears among the training patients.
    pub fn check_disjoint(&self) -> Result<()> {
        if let Some(i) = self.test.iter().find(|i| self.train.contains(i)) {
            return Err(Error::State(format!(
                "fold {}: patient index {i} is in both train and test sets",
                self.fold
            )));
        }
        Ok(())
    }

    pub fn test_ids(&self, records: &[CohortRecord]) -> Vec<String> {
        self.test.iter().map(|&i| records[i].patient_id.clone()).collect()
    }
}

/// Splits the cohort into `k` folds, stratified by event flag. Each stratum
/// is shuffled from the seed and dealt round robin, continuing the deal
/// across strata so fold sizes differ by at most one.
pub fn stratified_folds(records: &[CohortRecord], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if records.len() < k {
        return Err(Error::Config(format!(
            "{k}-fold cross-validation needs at least {k} patients, got {}",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_FOLDS]));
    let mut fold_of = vec![0; records.len()];
    let mut dealt = 0;
    for event in [true, false] {
        let mut stratum: Vec<usize> = (0..records.len()).filter(|&i| records[i].event == event).collect();
        stratum.shuffle(&mut rng);
        for i in stratum {
            fold_of[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let (test, train) = (0..records.len()).partition(|&i| fold_of[i] == fold);
            FoldSplit { fold, train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn records(n: usize) -> Vec<CohortRecord> {
        (0..n)
            .map(|i| CohortRecord {
                patient_id: format!("P{i}"),
                duration: 1.0 + i as f64,
                event: i % 3 != 0,
                bag_path: PathBuf::from("x"),
            })
            .collect()
    }

    #[test]
    fn folds_partition_the_cohort() {
        let recs = records(23);
        let folds = stratified_folds(&recs, 5, 9).unwrap();
        let mut seen = vec![0; 23];
        for f in &folds {
            f.check_disjoint().unwrap();
            assert_eq!(f.train.len() + f.test.len(), 23);
            for &i in &f.test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn events_spread_across_folds() {
        let recs = records(50);
        for f in stratified_folds(&recs, 5, 0).unwrap() {
            let events = f.test.iter().filter(|&&i| recs[i].event).count();
            assert!((6..=7).contains(&events), "{events}");
        }
    }

    #[test]
    fn same_seed_same_split() {
        let recs = records(30);
        assert_eq!(stratified_folds(&recs, 5, 4).unwrap(), stratified_folds(&recs, 5, 4).unwrap());
        assert_ne!(stratified_folds(&recs, 5, 4).unwrap(), stratified_folds(&recs, 5, 5).unwrap());
    }

    #[test]
    fn too_few_patients() {
        assert!(stratified_folds(&records(4), 5, 0).is_err());
    }

    #[test]
    fn overlap_detected() {
        let bad = FoldSplit {
            fold: 0,
            train: vec![0, 1],
            test: vec![1],
        };
        assert!(matches!(bad.check_disjoint(), Err(Error::State(_))));
    }
}
