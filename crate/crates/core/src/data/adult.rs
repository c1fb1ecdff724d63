use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Attribute, GroupedDataset};
use crate::error::{Error, Result};
use crate::features::Features;

/// Training and test files of the UCI distribution; both are loaded.
pub const ADULT_FILES: [&str; 2] = ["adult.data", "adult.test"];

pub const ADULT_FEATURES: [&str; 18] = [
    "sex_male",
    "race_white",
    "age_lt_25",
    "age_25_34",
    "age_35_44",
    "age_45_59",
    "edu_lt_9",
    "edu_9_10",
    "edu_11_12",
    "edu_13",
    "edu_gt_13",
    "married",
    "occupation_white_collar",
    "workclass_gov_or_incorporated",
    "capital_gain",
    "capital_loss",
    "hours_gt_40",
    "native_us",
];

const COLUMNS: usize = 15;

struct Raw<'a> {
    age: f64,
    workclass: &'a str,
    education_num: f64,
    marital: &'a str,
    occupation: &'a str,
    race: &'a str,
    sex: &'a str,
    capital_gain: f64,
    capital_loss: f64,
    hours: f64,
    country: &'a str,
    income: &'a str,
}

fn number(field: &str, name: &str, source: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::parse(source, line, format!("column `{name}`: not a number: `{field}`")))
}

fn parse_line<'a>(fields: &[&'a str], source: &str, line: usize) -> Result<Raw<'a>> {
    if fields.len() != COLUMNS {
        return Err(Error::parse(
            source,
            line,
            format!("expected {COLUMNS} columns, found {}", fields.len()),
        ));
    }
    Ok(Raw {
        age: number(fields[0], "age", source, line)?,
        workclass: fields[1],
        education_num: number(fields[4], "education-num", source, line)?,
        marital: fields[5],
        occupation: fields[6],
        race: fields[8],
        sex: fields[9],
        capital_gain: number(fields[10], "capital-gain", source, line)?,
        capital_loss: number(fields[11], "capital-loss", source, line)?,
        hours: number(fields[12], "hours-per-week", source, line)?,
        country: fields[13],
        income: fields[14],
    })
}

fn encode(r: &Raw<'_>) -> [f64; 18] {
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    let e = r.education_num;
    [
        b(r.sex == "Male"),
        b(r.race == "White"),
        b(r.age < 25.0),
        b((25.0..35.0).contains(&r.age)),
        b((35.0..45.0).contains(&r.age)),
        b((45.0..60.0).contains(&r.age)),
        b(e < 9.0),
        b((9.0..=10.0).contains(&e)),
        b((11.0..=12.0).contains(&e)),
        b(e == 13.0),
        b(e > 13.0),
        b(matches!(r.marital, "Married-civ-spouse" | "Married-AF-spouse")),
        b(matches!(r.occupation, "Exec-managerial" | "Prof-specialty" | "Tech-support" | "Sales")),
        b(matches!(r.workclass, "Self-emp-inc" | "Federal-gov" | "Local-gov" | "State-gov")),
        b(r.capital_gain > 0.0),
        b(r.capital_loss > 0.0),
        b(r.hours > 40.0),
        b(r.country == "United-States"),
    ]
}

/// Loads both Adult files from `dir` into 18 binary features. Missing
/// values (`?`) are kept and simply match none of the indicator bins.
/// Groups: sex (0 = Female, 1 = Male) or race (0 = non-White, 1 = White).
pub fn load_adult(dir: &Path, attribute: Attribute) -> Result<GroupedDataset> {
    let mut data = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for name in ADULT_FILES {
        let path = dir.join(name);
        let source = path.display().to_string();
        let reader = BufReader::new(File::open(&path)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            // the test file opens with a `|1x3 Cross validator` banner
            if trimmed.is_empty() || trimmed.starts_with('|') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            let raw = parse_line(&fields, &source, i + 1)?;
            let label = match raw.income.trim_end_matches('.') {
                ">50K" => 1.0,
                "<=50K" => 0.0,
                other => return Err(Error::parse(&source, i + 1, format!("unknown income label `{other}`"))),
            };
            let row = encode(&raw);
            groups.push(match attribute {
                Attribute::Sex => row[0] as usize,
                Attribute::Race => row[1] as usize,
            });
            data.extend_from_slice(&row);
            labels.push(label);
        }
    }
    let group_names = match attribute {
        Attribute::Sex => vec!["female".to_owned(), "male".to_owned()],
        Attribute::Race => vec!["non-white".to_owned(), "white".to_owned()],
    };
    GroupedDataset::new(
        format!("adult-{attribute}"),
        ADULT_FEATURES.iter().map(|s| s.to_string()).collect(),
        group_names,
        Features::new(ADULT_FEATURES.len(), data)?,
        groups,
        labels,
    )
}
