//! Seeded train/test split protocol: each of the `n_splits` splits is an
//! independent permutation cut at `round(ratio * n)`.

use crate::{CorpusError, Result};
use rand::seq::SliceRandom;
use vdq_tensor::rng::{derive_seed, rng_from};

pub fn make_splits(
    n_items: usize,
    ratio: f64,
    n_splits: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n_items < 2 {
        return Err(CorpusError::Manifest(format!(
            "cannot split {n_items} items"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::Manifest(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if n_splits < 1 {
        return Err(CorpusError::Manifest("need at least one split".into()));
    }
    let cut = ((ratio * n_items as f64).round() as usize).clamp(1, n_items - 1);
    let mut out = Vec::with_capacity(n_splits);
    for i in 0..n_splits {
        let mut rng = rng_from(derive_seed(seed, i as u64));
        let mut perm: Vec<usize> = (0..n_items).collect();
        perm.shuffle(&mut rng);
        let test = perm.split_off(cut);
        out.push((perm, test));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn eighty_twenty_on_ten_items() {
        let splits = make_splits(10, 0.8, 3, 7).unwrap();
        for (train, test) in &splits {
            assert_eq!(train.len(), 8);
            assert_eq!(test.len(), 2);
        }
    }

    #[test]
    fn disjoint_and_exhaustive() {
        for (train, test) in make_splits(37, 0.8, 10, 11).unwrap() {
            let t: HashSet<_> = train.iter().collect();
            let e: HashSet<_> = test.iter().collect();
            assert!(t.is_disjoint(&e));
            assert_eq!(t.len() + e.len(), 37);
        }
    }

    #[test]
    fn reproducible_and_distinct_across_indices() {
        let a = make_splits(50, 0.8, 5, 3).unwrap();
        let b = make_splits(50, 0.8, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1], "split indices should differ");
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_splits(1, 0.8, 1, 0).is_err());
        assert!(make_splits(10, 0.0, 1, 0).is_err());
        assert!(make_splits(10, 1.0, 1, 0).is_err());
        assert!(make_splits(10, 0.8, 0, 0).is_err());
    }
}
