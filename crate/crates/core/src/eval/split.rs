use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Role of a sample in one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Validation,
    Test,
}

impl Part {
    pub fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Validation => "validation",
            Part::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "validation" => Ok(Part::Validation),
            "test" => Ok(Part::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(*f > 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Random partition of `n` samples: the train and validation sizes are the
/// rounded fractions of `n`, the test part takes the rest.
pub fn split_dataset(n: usize, spec: &SplitSpec) -> Result<Vec<Part>> {
    spec.validate()?;
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 samples to split, got {n}")));
    }
    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = (spec.validation * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::invalid("split leaves an empty part"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(spec.seed, 0));
    let mut parts = vec![Part::Test; n];
    for &i in &idx[..n_train] {
        parts[i] = Part::Train;
    }
    for &i in &idx[n_train..n_train + n_val] {
        parts[i] = Part::Validation;
    }
    Ok(parts)
}

/// Ascending indices of each part.
pub fn indices_of(parts: &[Part], which: Part) -> Vec<usize> {
    parts
        .iter()
        .enumerate()
        .filter(|(_, p)| **p == which)
        .map(|(i, _)| i)
        .collect()
}

/// `k` disjoint test folds covering `0..n`, sizes differing by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("cannot make {k} folds from {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 1));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Parts for one cross-validation fold: the fold is the test part and the
/// remaining samples are divided into train and validation in proportion
/// `validation_fraction`.
pub fn fold_parts(n: usize, test_fold: &[usize], validation_fraction: f64, seed: u64) -> Result<Vec<Part>> {
    let mut parts = vec![Part::Train; n];
    for &i in test_fold {
        parts[i] = Part::Test;
    }
    let mut rest = indices_of(&parts, Part::Train);
    rest.shuffle(&mut stream_rng(seed, 2));
    let n_val = ((validation_fraction * rest.len() as f64).round() as usize).clamp(1, rest.len().saturating_sub(1));
    if rest.len() < 2 {
        return Err(Error::invalid("fold leaves fewer than two training samples"));
    }
    for &i in &rest[..n_val] {
        parts[i] = Part::Validation;
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_splits_seventy_fifteen_fifteen() {
        let p = split_dataset(100, &SplitSpec::default()).unwrap();
        assert_eq!(indices_of(&p, Part::Train).len(), 70);
        assert_eq!(indices_of(&p, Part::Validation).len(), 15);
        assert_eq!(indices_of(&p, Part::Test).len(), 15);
    }

    #[test]
    fn sizes_within_one_of_fractions() {
        for n in [10, 11, 37, 352, 2713, 6833] {
            let p = split_dataset(n, &SplitSpec::default()).unwrap();
            for (part, f) in [(Part::Train, 0.7), (Part::Validation, 0.15), (Part::Test, 0.15)] {
                let got = indices_of(&p, part).len() as f64;
                assert!((got - f * n as f64).abs() <= 1.0, "n {n} {part:?} {got}");
            }
        }
    }

    #[test]
    fn seeds_give_different_partitions() {
        let a = split_dataset(50, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
        let b = split_dataset(50, &SplitSpec { seed: 2, ..SplitSpec::default() }).unwrap();
        assert_eq!(a, split_dataset(50, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap());
        let witness = (0..50).find(|&i| a[i] != b[i]);
        assert!(witness.is_some());
    }

    #[test]
    fn bad_specs_rejected() {
        let bad = SplitSpec { train: 0.8, ..SplitSpec::default() };
        assert!(split_dataset(100, &bad).is_err());
        let zero = SplitSpec { train: 0.85, validation: 0.0, ..SplitSpec::default() };
        assert!(split_dataset(100, &zero).is_err());
        assert!(split_dataset(9, &SplitSpec::default()).is_err());
    }

    #[test]
    fn folds_partition_the_samples() {
        let folds = kfold_indices(103, 10, 4).unwrap();
        assert_eq!(folds.len(), 10);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 10 || f.len() == 11));
        assert_eq!(kfold_indices(5, 5, 0).unwrap().len(), 5);
        assert!(kfold_indices(5, 6, 0).is_err());
    }

    #[test]
    fn fold_parts_hold_out_validation() {
        let folds = kfold_indices(100, 10, 0).unwrap();
        let p = fold_parts(100, &folds[3], 0.15, 9).unwrap();
        assert_eq!(indices_of(&p, Part::Test), folds[3]);
        assert_eq!(indices_of(&p, Part::Validation).len(), 14);
        assert_eq!(indices_of(&p, Part::Train).len(), 76);
    }
}
