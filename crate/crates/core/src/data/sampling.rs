use super::{GroupedDataset, Split};
use crate::error::{Error, Result};
use crate::rng::{shuffled_indices, CounterRng, Stream};

/// Share of each (group, label) stratum assigned to the test split.
pub const TEST_FRACTION: f64 = 0.2;

/// Assigns `round(test_fraction·n)` rows of every (group, label) stratum to
/// the test split, chosen by the `DataSplit` stream of `seed`.
pub fn stratified_split(ds: GroupedDataset, test_fraction: f64, seed: u64) -> Result<GroupedDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction", format!("must lie in (0, 1), got {test_fraction}")));
    }
    let strata = 2 * ds.num_groups();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); strata];
    for i in 0..ds.rows() {
        members[2 * ds.groups()[i] + ds.labels()[i] as usize].push(i);
    }
    let rng = CounterRng::new(seed, Stream::DataSplit, &[0]);
    let mut split = vec![Split::Train; ds.rows()];
    for (s, rows) in members.iter().enumerate() {
        let n_test = (test_fraction * rows.len() as f64).round() as usize;
        for &pos in shuffled_indices(&rng, s as u64, rows.len()).iter().take(n_test) {
            split[rows[pos]] = Split::Test;
        }
    }
    ds.with_split(split)
}

/// One random subset of the test split per fraction, each of size
/// `⌊fraction·|test|⌋` and drawn independently, so subsets may overlap.
/// Returned indices refer to dataset rows, in ascending order.
pub fn partition_test(ds: &GroupedDataset, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() {
        return Err(Error::Empty("partition fractions"));
    }
    let test = ds.indices(Split::Test);
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let rng = CounterRng::new(seed, Stream::DataSplit, &[1]);
    fractions
        .iter()
        .enumerate()
        .map(|(p, &f)| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid("fraction", format!("must lie in (0, 1], got {f}")));
            }
            let size = (f * test.len() as f64).floor() as usize;
            if size == 0 {
                return Err(Error::Empty("test partition"));
            }
            let mut rows: Vec<usize> = shuffled_indices(&rng, p as u64, test.len())[..size]
                .iter()
                .map(|&i| test[i])
                .collect();
            rows.sort_unstable();
            Ok(rows)
        })
        .collect()
}

/// Downsamples the training split so that `group` makes up `target_ratio`
/// of it. Only one side is reduced: the designated group when the target is
/// below its current share, every other group otherwise. Test rows are kept.
pub fn resample_group_ratio(ds: &GroupedDataset, group: usize, target_ratio: f64, seed: u64) -> Result<GroupedDataset> {
    if group >= ds.num_groups() {
        return Err(Error::invalid("group", format!("group {group} does not exist")));
    }
    if !(0.1..=0.9).contains(&target_ratio) {
        return Err(Error::invalid("target_ratio", format!("must lie in [0.1, 0.9], got {target_ratio}")));
    }
    let train = ds.indices(Split::Train);
    let (inside, outside): (Vec<usize>, Vec<usize>) = train.iter().partition(|&&i| ds.groups()[i] == group);
    let (a, b) = (inside.len(), outside.len());
    if a == 0 || b == 0 {
        return Err(Error::invalid(
            "target_ratio",
            format!("achievable range is empty: {a} rows in the group, {b} outside"),
        ));
    }
    let lo = 1.0 / (1.0 + b as f64);
    let hi = a as f64 / (a as f64 + 1.0);
    if target_ratio < lo || target_ratio > hi {
        return Err(Error::invalid(
            "target_ratio",
            format!("{target_ratio} is not reachable by downsampling; achievable range is [{lo:.6}, {hi:.6}]"),
        ));
    }
    let current = a as f64 / (a + b) as f64;
    let rng = CounterRng::new(seed, Stream::Resampling, &[group as u64]);
    let (shrink, keep_count) = if target_ratio < current {
        let want = (target_ratio * b as f64 / (1.0 - target_ratio)).round() as usize;
        (&inside, want.max(1))
    } else {
        let want = (a as f64 * (1.0 - target_ratio) / target_ratio).round() as usize;
        (&outside, want.max(1))
    };
    let mut dropped = vec![false; ds.rows()];
    if keep_count < shrink.len() {
        for &pos in &shuffled_indices(&rng, 0, shrink.len())[keep_count..] {
            dropped[shrink[pos]] = true;
        }
    }
    let rows: Vec<usize> = (0..ds.rows()).filter(|&i| !dropped[i]).collect();
    Ok(ds.retain_rows(&rows))
}
