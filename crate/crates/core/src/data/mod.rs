//! Grouped tabular datasets: loaders for Adult and COMPAS, the seeded
//! train/test split and the samplers used by the experiments.

mod adult;
mod compas;
mod processed;
mod sampling;
pub mod synthetic;

pub use adult::{load_adult, ADULT_FEATURES, ADULT_FILES};
pub use compas::{load_compas, COMPAS_FEATURES, COMPAS_FILE};
pub use processed::{read_processed, sha256_hex, write_processed, Manifest, MANIFEST_SCHEMA_VERSION};
pub use sampling::{partition_test, resample_group_ratio, stratified_split, TEST_FRACTION};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::Features;
use crate::train::TrainGroup;

/// Environment variable naming the directory with the raw data files.
pub const DATA_DIR_ENV: &str = "FAIRSMOOTH_DATA_DIR";

/// `$FAIRSMOOTH_DATA_DIR`, falling back to `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Adult,
    Compas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Sex,
    Race,
}

macro_rules! name_enum {
    ($ty:ty, $what:literal, $($var:path => $s:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($var => $s),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($var),)+
                    _ => Err(Error::invalid($what, format!("unknown value `{s}`"))),
                }
            }
        }
    };
}

name_enum!(DatasetKind, "dataset", DatasetKind::Adult => "adult", DatasetKind::Compas => "compas");
name_enum!(Attribute, "attribute", Attribute::Sex => "sex", Attribute::Race => "race");

impl DatasetKind {
    pub fn load(self, dir: &std::path::Path, attribute: Attribute) -> Result<GroupedDataset> {
        match self {
            DatasetKind::Adult => load_adult(dir, attribute),
            DatasetKind::Compas => load_compas(dir, attribute),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Binary-labelled rows partitioned into disjoint groups `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub group_names: Vec<String>,
    features: Features,
    groups: Vec<usize>,
    labels: Vec<f64>,
    split: Vec<Split>,
}

/// Rows selected from a dataset, with their group ids and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub features: Features,
    pub labels: Vec<f64>,
    pub groups: Vec<usize>,
    /// Row indices in the parent dataset.
    pub rows: Vec<usize>,
}

impl Subset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Features of the rows belonging to group `k`.
    pub fn group_features(&self, k: usize) -> Features {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.groups[i] == k).collect();
        self.features.select(&idx)
    }
}

impl GroupedDataset {
    /// Every row starts in the training split.
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        group_names: Vec<String>,
        features: Features,
        groups: Vec<usize>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        let n = features.rows();
        check_dim("feature names", features.cols(), feature_names.len())?;
        check_dim("group ids", n, groups.len())?;
        check_dim("labels", n, labels.len())?;
        if group_names.is_empty() {
            return Err(Error::Empty("group names"));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= group_names.len()) {
            return Err(Error::invalid("groups", format!("group id {g} out of range")));
        }
        for &y in &labels {
            crate::model::check_label(y)?;
        }
        Ok(Self {
            name: name.into(),
            feature_names,
            group_names,
            features,
            groups,
            labels,
            split: vec![Split::Train; n],
        })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        check_dim("split", self.rows(), split.len())?;
        self.split = split;
        Ok(self)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.rows()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn group_counts(&self, split: Option<Split>) -> Vec<usize> {
        let mut c = vec![0; self.num_groups()];
        for i in 0..self.rows() {
            if split.is_none_or(|s| self.split[i] == s) {
                c[self.groups[i]] += 1;
            }
        }
        c
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().sum::<f64>() / self.rows() as f64
    }

    pub fn subset(&self, rows: &[usize]) -> Subset {
        Subset {
            features: self.features.select(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            groups: rows.iter().map(|&i| self.groups[i]).collect(),
            rows: rows.to_vec(),
        }
    }

    pub fn part(&self, split: Split) -> Subset {
        self.subset(&self.indices(split))
    }

    /// Keeps only `rows`, in the given order.
    pub fn retain_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            group_names: self.group_names.clone(),
            features: self.features.select(rows),
            groups: rows.iter().map(|&i| self.groups[i]).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            split: rows.iter().map(|&i| self.split[i]).collect(),
        }
    }

    /// Training rows of each group, ready for [`crate::train::train_fair`].
    pub fn training_groups(&self) -> Result<Vec<GroupTrainData>> {
        let train = self.part(Split::Train);
        (0..self.num_groups())
            .map(|k| {
                let idx: Vec<usize> = (0..train.len()).filter(|&i| train.groups[i] == k).collect();
                if idx.is_empty() {
                    return Err(Error::EmptyGroup(k));
                }
                Ok(GroupTrainData {
                    id: k as u64,
                    features: train.features.select(&idx),
                    labels: idx.iter().map(|&i| train.labels[i]).collect(),
                })
            })
            .collect()
    }
}

/// Owned training rows of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrainData {
    pub id: u64,
    pub features: Features,
    pub labels: Vec<f64>,
}

impl GroupTrainData {
    pub fn as_train_group(&self) -> TrainGroup<'_> {
        TrainGroup {
            id: self.id,
            features: &self.features,
            labels: &self.labels,
        }
    }
}

/// Column lookup by header name (first occurrence wins).
pub(crate) struct Columns {
    names: Vec<String>,
}

impl Columns {
    pub(crate) fn new(header: &csv::StringRecord) -> Self {
        Self {
            names: header.iter().map(str::to_owned).collect(),
        }
    }

    pub(crate) fn index(&self, name: &str, source: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::parse(source, 1, format!("missing column `{name}`")))
    }
}
