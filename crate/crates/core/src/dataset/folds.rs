//! Stratified k-fold assignment and stratified subsampling.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, Label};

/// Pair indices of one train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn strata(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        out[*l as usize].push(i);
    }
    out
}

/// Split indices `0..labels.len()` into `k` folds that preserve the label mix.
///
/// Each stratum is shuffled with a seeded RNG and dealt round-robin; the
/// dealing position carries over between strata so fold sizes differ by at
/// most one.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Fold>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidFoldCount(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = (0..k).map(|_| Vec::new()).collect();
    let mut cursor = 0;
    for (label, mut members) in Label::ALL.into_iter().zip(strata(labels)) {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(DatasetError::InsufficientStratum { label, count: members.len(), k });
        }
        members.shuffle(&mut rng);
        for idx in members {
            tests[cursor % k].push(idx);
            cursor += 1;
        }
    }
    if cursor < k {
        return Err(DatasetError::InsufficientStratum {
            label: Label::InDistribution,
            count: cursor,
            k,
        });
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut test = tests[f].clone();
        test.sort_unstable();
        let mut train: Vec<usize> =
            tests.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, t)| t.iter().copied()).collect();
        train.sort_unstable();
        folds.push(Fold { train, test });
    }
    Ok(folds)
}

/// Keep `round(ratio * n_label)` members of each label from `indices`.
///
/// Non-empty strata keep at least one member. Output is sorted.
pub fn stratified_subsample(
    indices: &[usize],
    labels: &[Label],
    ratio: f64,
    seed: u64,
) -> Result<Vec<usize>, DatasetError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in Label::ALL {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == label).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let keep = ((ratio * members.len() as f64).round() as usize).clamp(1, members.len());
        out.extend_from_slice(&members[..keep]);
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labels(n_id: usize, n_ood: usize) -> Vec<Label> {
        let mut l = vec![Label::InDistribution; n_id];
        l.extend(vec![Label::OutOfDistribution; n_ood]);
        l
    }

    #[test]
    fn thousand_pairs_ten_folds() {
        let l = labels(900, 100);
        let folds = stratified_kfold(&l, 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = vec![0usize; 1000];
        for f in &folds {
            let ood = f.test.iter().filter(|&&i| l[i] == Label::OutOfDistribution).count();
            assert_eq!(f.test.len(), 100);
            assert_eq!(ood, 10);
            assert_eq!(f.train.len(), 900);
            for &i in &f.test {
                seen[i] += 1;
                assert!(f.train.binary_search(&i).is_err());
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn single_stratum_and_errors() {
        let folds = stratified_kfold(&labels(10, 0), 10, 0).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 1));
        assert!(matches!(stratified_kfold(&labels(10, 0), 11, 0), Err(DatasetError::InsufficientStratum { .. })));
        assert_eq!(stratified_kfold(&labels(10, 0), 1, 0), Err(DatasetError::InvalidFoldCount(1)));
        assert!(stratified_kfold(&labels(20, 3), 5, 0).is_err());
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let l = labels(50, 10);
        assert_eq!(stratified_kfold(&l, 5, 1).unwrap(), stratified_kfold(&l, 5, 1).unwrap());
        assert_ne!(stratified_kfold(&l, 5, 1).unwrap(), stratified_kfold(&l, 5, 2).unwrap());
    }

    #[test]
    fn subsample_keeps_proportions() {
        let l = labels(900, 100);
        let all: Vec<usize> = (0..1000).collect();
        let s = stratified_subsample(&all, &l, 0.1, 3).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.iter().filter(|&&i| l[i] == Label::OutOfDistribution).count(), 10);
        assert!(stratified_subsample(&all, &l, 0.0, 3).is_err());
        assert_eq!(stratified_subsample(&all, &l, 1.0, 3).unwrap(), all);
    }
}
