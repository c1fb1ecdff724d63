use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Flat vector of every trainable weight of one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance `‖self − other‖₂`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        check_dim("parameter vector", self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Vec<f64> {
        p.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParameterVector::new(vec![0.0, -2.5]).is_ok());
    }

    #[test]
    fn distance_is_euclidean() {
        let a = ParameterVector::new(vec![0.0, 0.0]).unwrap();
        let b = ParameterVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(a.distance(&b).unwrap(), 5.0);
        let c = ParameterVector::zeros(3);
        assert!(matches!(
            a.distance(&c),
            Err(Error::DimensionMismatch { expected: 2, actual: 3, .. })
        ));
    }

    #[test]
    fn serde_rejects_nan_free_roundtrip() {
        let p = ParameterVector::new(vec![0.1, -1e-300, 12345.678901234567]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ParameterVector = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
