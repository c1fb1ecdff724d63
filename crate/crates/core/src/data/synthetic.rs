//! Small synthetic grouped datasets for tests, sweeps and self-checks.

use rand::Rng;

use super::{stratified_split, GroupedDataset, TEST_FRACTION};
use crate::error::Result;
use crate::features::Features;
use crate::rng::{CounterRng, Stream};

/// Two groups of `n_per_group` points in `[−1, 1]³`, each labelled by its
/// own hyperplane, so a single classifier cannot fit both groups exactly.
pub fn two_group(n_per_group: usize, seed: u64) -> Result<GroupedDataset> {
    let normals = [[1.0, 0.5, 0.0], [0.2, 1.0, -0.4]];
    let mut rng = CounterRng::new(seed, Stream::DataSplit, &[u64::MAX]).at(0);
    let mut data = Vec::with_capacity(2 * n_per_group * 3);
    let mut groups = Vec::with_capacity(2 * n_per_group);
    let mut labels = Vec::with_capacity(2 * n_per_group);
    for (k, w) in normals.iter().enumerate() {
        for _ in 0..n_per_group {
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let s: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            labels.push(if s >= 0.0 { 1.0 } else { 0.0 });
            groups.push(k);
            data.extend_from_slice(&x);
        }
    }
    let ds = GroupedDataset::new(
        "synthetic",
        vec!["x0".into(), "x1".into(), "x2".into()],
        vec!["a".into(), "b".into()],
        Features::new(3, data)?,
        groups,
        labels,
    )?;
    stratified_split(ds, TEST_FRACTION, seed)
}
