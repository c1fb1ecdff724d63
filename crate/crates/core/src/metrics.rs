//! Accuracy and group-fairness metrics on thresholded predictions.
//!
//! A probability `p` is a positive prediction when `p ≥ 0.5`. Group ids are
//! `0..groups`; every metric that compares groups fails if one of them has
//! no rows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn predicted_positive(p: f64) -> bool {
    p >= 0.5
}

pub fn accuracy(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_dim("labels", preds.len(), labels.len())?;
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, y)| predicted_positive(**p) == (**y == 1.0))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Confusion counts and rates for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: usize,
    pub count: usize,
    pub predicted_positive: usize,
    pub positives: usize,
    pub negatives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub positive_rate: f64,
    /// `None` when the group has no positive labels.
    pub tpr: Option<f64>,
    /// `None` when the group has no negative labels.
    pub fpr: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-group rates. Without labels only `count` and `positive_rate` are
/// meaningful.
pub fn group_rates(preds: &[f64], labels: Option<&[f64]>, groups: &[usize], num_groups: usize) -> Result<Vec<GroupRates>> {
    check_dim("group ids", preds.len(), groups.len())?;
    if let Some(y) = labels {
        check_dim("labels", preds.len(), y.len())?;
    }
    let mut counts = vec![[0usize; 5]; num_groups];
    for (i, (&p, &g)) in preds.iter().zip(groups).enumerate() {
        if g >= num_groups {
            return Err(Error::invalid("groups", format!("group id {g} out of range for {num_groups} groups")));
        }
        let pos = predicted_positive(p);
        let c = &mut counts[g];
        c[0] += 1;
        c[1] += pos as usize;
        if let Some(y) = labels {
            if y[i] == 1.0 {
                c[2] += 1;
                c[3] += pos as usize;
            } else {
                c[4] += pos as usize;
            }
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(g, &[count, pp, positives, tp, fp])| {
            if count == 0 {
                return Err(Error::EmptyGroup(g));
            }
            let negatives = if labels.is_some() { count - positives } else { 0 };
            Ok(GroupRates {
                group: g,
                count,
                predicted_positive: pp,
                positives,
                negatives,
                true_positives: tp,
                false_positives: fp,
                positive_rate: pp as f64 / count as f64,
                tpr: ratio(tp, positives),
                fpr: ratio(fp, negatives),
            })
        })
        .collect()
}

fn max_pairwise_gap(values: &[f64]) -> f64 {
    let mut gap = 0.0f64;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            gap = gap.max((a - b).abs());
        }
    }
    gap
}

fn require_two(num_groups: usize) -> Result<()> {
    if num_groups < 2 {
        return Err(Error::invalid("groups", "need at least two groups"));
    }
    Ok(())
}

/// Demographic parity disparity: largest gap in positive-prediction rate
/// between two groups.
pub fn delta_dp(preds: &[f64], groups: &[usize], num_groups: usize) -> Result<f64> {
    require_two(num_groups)?;
    let rates = group_rates(preds, None, groups, num_groups)?;
    Ok(dp_from_rates(&rates))
}

fn dp_from_rates(rates: &[GroupRates]) -> f64 {
    max_pairwise_gap(&rates.iter().map(|r| r.positive_rate).collect::<Vec<_>>())
}

/// How the TPR and FPR gaps of a group pair are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EoAggregation {
    #[default]
    Max,
    Sum,
    Mean,
}

impl FromStr for EoAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::invalid("eo_aggregation", format!("unknown aggregation `{s}`"))),
        }
    }
}

/// Equalized odds disparity with TPR and FPR gaps combined by max.
pub fn delta_eo(preds: &[f64], labels: &[f64], groups: &[usize], num_groups: usize) -> Result<f64> {
    delta_eo_with(preds, labels, groups, num_groups, EoAggregation::Max)
}

pub fn delta_eo_with(preds: &[f64], labels: &[f64], groups: &[usize], num_groups: usize, agg: EoAggregation) -> Result<f64> {
    require_two(num_groups)?;
    for &y in labels {
        crate::model::check_label(y)?;
    }
    let rates = group_rates(preds, Some(labels), groups, num_groups)?;
    eo_from_rates(&rates, agg)
}

fn eo_from_rates(rates: &[GroupRates], agg: EoAggregation) -> Result<f64> {
    let mut tpr = Vec::with_capacity(rates.len());
    let mut fpr = Vec::with_capacity(rates.len());
    for r in rates {
        match (r.tpr, r.fpr) {
            (Some(t), Some(f)) => {
                tpr.push(t);
                fpr.push(f);
            }
            _ => {
                return Err(Error::DegenerateGroup {
                    group: r.group,
                    positives: r.positives,
                    negatives: r.negatives,
                })
            }
        }
    }
    let mut gap = 0.0f64;
    for i in 0..tpr.len() {
        for j in i + 1..tpr.len() {
            let (t, f) = ((tpr[i] - tpr[j]).abs(), (fpr[i] - fpr[j]).abs());
            gap = gap.max(match agg {
                EoAggregation::Max => t.max(f),
                EoAggregation::Sum => t + f,
                EoAggregation::Mean => 0.5 * (t + f),
            });
        }
    }
    Ok(gap)
}

/// Exponent of an `L^p` norm, `1 ≤ p ≤ ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::invalid("p", format!("exponent must be at least 1, got {p}")));
        }
        Ok(if p.is_infinite() { Self::Infinity } else { Self::Finite(p) })
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Self::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::invalid("p", format!("not a number: `{other}`")))?;
                Self::finite(p)
            }
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Distance between the overall classifier's outputs `h` and a group
/// classifier's outputs `hk` on that group's inputs: `max |h − h_k|` for
/// `p = ∞`, otherwise `(1/n)·(Σ |h − h_k|^p)^{1/p}`.
pub fn epsilon_fairness(h: &[f64], hk: &[f64], p: Exponent) -> Result<f64> {
    check_dim("group classifier outputs", h.len(), hk.len())?;
    if h.is_empty() {
        return Err(Error::Empty("group inputs"));
    }
    let diffs = h.iter().zip(hk).map(|(a, b)| (a - b).abs());
    Ok(match p {
        Exponent::Infinity => diffs.fold(0.0, f64::max),
        Exponent::Finite(p) => {
            if p < 1.0 || p.is_nan() {
                return Err(Error::invalid("p", format!("exponent must be at least 1, got {p}")));
            }
            diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p) / h.len() as f64
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEntry {
    pub group: usize,
    pub p: Exponent,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub rows: usize,
    pub accuracy: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
    pub per_group: Vec<GroupRates>,
    #[serde(default)]
    pub epsilon_fairness: Vec<EpsilonEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateBound>,
}

/// Measured sup-gap between overall and group classifiers against the
/// certified ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateBound {
    pub epsilon: f64,
    pub max_gap: f64,
    /// Largest Monte-Carlo slack granted to a single input.
    pub max_tolerance: f64,
    pub violations: usize,
}

impl CertificateBound {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

impl EvaluationReport {
    /// Accuracy, ΔDP and ΔEO (max aggregation) of thresholded `preds`.
    pub fn compute(preds: &[f64], labels: &[f64], groups: &[usize], num_groups: usize) -> Result<Self> {
        require_two(num_groups)?;
        for &y in labels {
            crate::model::check_label(y)?;
        }
        let per_group = group_rates(preds, Some(labels), groups, num_groups)?;
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            rows: preds.len(),
            accuracy: accuracy(preds, labels)?,
            delta_dp: dp_from_rates(&per_group),
            delta_eo: eo_from_rates(&per_group, EoAggregation::Max)?,
            per_group,
            epsilon_fairness: Vec::new(),
            certificate: None,
        })
    }

    /// Largest measured ε-fairness value for exponent `p`.
    pub fn max_epsilon(&self, p: Exponent) -> Option<f64> {
        self.epsilon_fairness
            .iter()
            .filter(|e| e.p == p)
            .map(|e| e.value)
            .reduce(f64::max)
    }

    pub const CSV_HEADER: &'static str = "rows,accuracy,delta_dp,delta_eo,epsilon_inf";

    pub fn csv_row(&self) -> String {
        let eps = self.max_epsilon(Exponent::Infinity).map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", self.rows, self.accuracy, self.delta_dp, self.delta_eo, eps)
    }
}
