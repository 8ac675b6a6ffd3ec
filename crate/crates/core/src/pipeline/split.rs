use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::format::Dataset;
use crate::error::{Error, Result};

/// Seeded per-class split. Each class sends `round(n * test_fraction)` of
/// its records to the test side. Returns sorted (train, test) indices.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Every (train, held-out) split leaving a single record out.
pub fn leave_one_out(n: usize) -> impl Iterator<Item = (Vec<usize>, usize)> {
    (0..n).map(move |held| ((0..n).filter(|&i| i != held).collect(), held))
}

/// The records at `indices`, with the same class list.
pub fn subset(ds: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        classes: ds.classes.clone(),
        records: indices.iter().map(|&i| ds.records[i].clone()).collect(),
    }
}
