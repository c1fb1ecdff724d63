use std::path::Path;

use super::{Attribute, Columns, GroupedDataset};
use crate::error::{Error, Result};
use crate::features::Features;

pub const COMPAS_FILE: &str = "compas-scores-two-years.csv";

pub const COMPAS_FEATURES: [&str; 10] = [
    "sex_male",
    "race_african_american",
    "age_lt_25",
    "age_25_45",
    "age_gt_45",
    "priors_0",
    "priors_1_3",
    "priors_gt_3",
    "charge_felony",
    "charge_misdemeanor",
];

/// Loads the two-year COMPAS file from `dir`, keeping rows whose screening
/// happened within 30 days of arrest, with a known recidivism flag, a
/// non-traffic charge and a risk score. The label is 1 when the person did
/// not reoffend within two years. Groups: sex (0 = Female, 1 = Male) or
/// race (0 = African-American, 1 = other).
pub fn load_compas(dir: &Path, attribute: Attribute) -> Result<GroupedDataset> {
    let path = dir.join(COMPAS_FILE);
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&path)?;
    let cols = Columns::new(reader.headers()?);
    let width = reader.headers()?.len();
    let c_sex = cols.index("sex", &source)?;
    let c_race = cols.index("race", &source)?;
    let c_age = cols.index("age_cat", &source)?;
    let c_priors = cols.index("priors_count", &source)?;
    let c_days = cols.index("days_b_screening_arrest", &source)?;
    let c_recid = cols.index("is_recid", &source)?;
    let c_degree = cols.index("c_charge_degree", &source)?;
    let c_score = cols.index("score_text", &source)?;
    let c_label = cols.index("two_year_recid", &source)?;

    let mut data = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::parse(&source, line, format!("expected {width} columns, found {}", rec.len())));
        }
        let int = |c: usize, name: &str| -> Result<Option<i64>> {
            let f = rec[c].trim();
            if f.is_empty() {
                return Ok(None);
            }
            f.parse()
                .map(Some)
                .map_err(|_| Error::parse(&source, line, format!("column `{name}`: not an integer: `{f}`")))
        };
        let days = int(c_days, "days_b_screening_arrest")?;
        if !days.is_some_and(|d| (-30..=30).contains(&d)) {
            continue;
        }
        if int(c_recid, "is_recid")? == Some(-1) {
            continue;
        }
        let degree = rec[c_degree].trim();
        if degree == "O" {
            continue;
        }
        if matches!(rec[c_score].trim(), "N/A" | "") {
            continue;
        }
        let priors = int(c_priors, "priors_count")?
            .ok_or_else(|| Error::parse(&source, line, "missing priors_count"))?;
        let age = rec[c_age].trim();
        let label = match int(c_label, "two_year_recid")? {
            Some(0) => 1.0,
            Some(1) => 0.0,
            other => return Err(Error::parse(&source, line, format!("unexpected two_year_recid {other:?}"))),
        };
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let row = [
            b(rec[c_sex].trim() == "Male"),
            b(rec[c_race].trim() == "African-American"),
            b(age == "Less than 25"),
            b(age == "25 - 45"),
            b(age == "Greater than 45"),
            b(priors == 0),
            b((1..=3).contains(&priors)),
            b(priors > 3),
            b(degree == "F"),
            b(degree == "M"),
        ];
        groups.push(match attribute {
            Attribute::Sex => row[0] as usize,
            Attribute::Race => 1 - row[1] as usize,
        });
        data.extend_from_slice(&row);
        labels.push(label);
    }
    let group_names = match attribute {
        Attribute::Sex => vec!["female".to_owned(), "male".to_owned()],
        Attribute::Race => vec!["african-american".to_owned(), "other".to_owned()],
    };
    GroupedDataset::new(
        format!("compas-{attribute}"),
        COMPAS_FEATURES.iter().map(|s| s.to_string()).collect(),
        group_names,
        Features::new(COMPAS_FEATURES.len(), data)?,
        groups,
        labels,
    )
}
