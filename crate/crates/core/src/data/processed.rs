use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GroupedDataset, Split};
use crate::error::{Error, Result};
use crate::features::Features;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const PROCESSED_CSV: &str = "processed.csv";
const MANIFEST_JSON: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub dataset: String,
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub feature_names: Vec<String>,
    pub group_names: Vec<String>,
    pub group_counts: Vec<usize>,
    pub label_positive_fraction: f64,
    pub processed_file: String,
    pub processed_sha256: String,
    /// Checksums of the raw inputs, by file name.
    pub raw_sha256: BTreeMap<String, String>,
}

fn render(ds: &GroupedDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.extend(["group", "label", "split"]);
    w.write_record(&header)?;
    for i in 0..ds.rows() {
        let mut rec: Vec<String> = ds.features().row(i).iter().map(|v| format!("{v}")).collect();
        rec.push(ds.groups()[i].to_string());
        rec.push(format!("{}", ds.labels()[i]));
        rec.push(
            match ds.split()[i] {
                Split::Train => "train",
                Split::Test => "test",
            }
            .to_owned(),
        );
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `processed.csv` and `manifest.json` into `out_dir`. `raw_files`
/// are checksummed into the manifest.
pub fn write_processed(ds: &GroupedDataset, out_dir: &Path, raw_files: &[&Path]) -> Result<Manifest> {
    fs::create_dir_all(out_dir)?;
    let bytes = render(ds)?;
    fs::write(out_dir.join(PROCESSED_CSV), &bytes)?;
    let mut raw_sha256 = BTreeMap::new();
    for p in raw_files {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        raw_sha256.insert(name, sha256_hex(&fs::read(p)?));
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        dataset: ds.name.clone(),
        rows: ds.rows(),
        train_rows: ds.indices(Split::Train).len(),
        test_rows: ds.indices(Split::Test).len(),
        feature_names: ds.feature_names.clone(),
        group_names: ds.group_names.clone(),
        group_counts: ds.group_counts(None),
        label_positive_fraction: ds.positive_fraction(),
        processed_file: PROCESSED_CSV.to_owned(),
        processed_sha256: sha256_hex(&bytes),
        raw_sha256,
    };
    fs::write(out_dir.join(MANIFEST_JSON), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Reads a directory written by [`write_processed`], checking the processed
/// file against the manifest checksum.
pub fn read_processed(dir: &Path) -> Result<(GroupedDataset, Manifest)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_JSON))?)?;
    let path = dir.join(&manifest.processed_file);
    let source = path.display().to_string();
    let bytes = fs::read(&path)?;
    let digest = sha256_hex(&bytes);
    if digest != manifest.processed_sha256 {
        return Err(Error::parse(&source, 0, format!("checksum {digest} does not match manifest")));
    }
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let cols = manifest.feature_names.len();
    let mut data = Vec::with_capacity(manifest.rows * cols);
    let mut groups = Vec::with_capacity(manifest.rows);
    let mut labels = Vec::with_capacity(manifest.rows);
    let mut split = Vec::with_capacity(manifest.rows);
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != cols + 3 {
            return Err(Error::parse(&source, line, format!("expected {} columns, found {}", cols + 3, rec.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(&source, line, format!("not a number: `{s}`"))) };
        for f in rec.iter().take(cols) {
            data.push(num(f)?);
        }
        groups.push(num(&rec[cols])? as usize);
        labels.push(num(&rec[cols + 1])?);
        split.push(match &rec[cols + 2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::parse(&source, line, format!("unknown split `{other}`"))),
        });
    }
    let ds = GroupedDataset::new(
        manifest.dataset.clone(),
        manifest.feature_names.clone(),
        manifest.group_names.clone(),
        Features::new(cols, data)?,
        groups,
        labels,
    )?
    .with_split(split)?;
    Ok((ds, manifest))
}
