use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    cols: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::invalid("cols", "feature width must be positive"));
        }
        if data.len() % cols != 0 {
            return Err(Error::invalid(
                "data",
                format!("length {} is not a multiple of {cols}", data.len()),
            ));
        }
        Ok(Self { cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or(Error::Empty("feature rows"))?;
        let mut data = Vec::with_capacity(cols * rows.len());
        for r in rows {
            check_dim("feature row", cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(cols, data)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            cols: self.cols,
            data,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Distinct rows in first-occurrence order, plus the index of each
    /// original row into that distinct set. Rows are compared bitwise.
    pub fn dedup(&self) -> (Features, Vec<usize>) {
        let mut seen = std::collections::HashMap::new();
        let mut unique = Vec::new();
        let mut index = Vec::with_capacity(self.rows());
        for row in self.iter_rows() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let next = seen.len();
            let id = *seen.entry(key).or_insert_with(|| {
                unique.extend_from_slice(row);
                next
            });
            index.push(id);
        }
        (
            Features {
                cols: self.cols,
                data: unique,
            },
            index,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_maps_back_to_original_rows() {
        let f = Features::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();
        let (u, idx) = f.dedup();
        assert_eq!(u.rows(), 3);
        assert_eq!(idx, vec![0, 1, 0, 2]);
        for (i, &k) in idx.iter().enumerate() {
            assert_eq!(f.row(i), u.row(k));
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(Features::from_rows(&rows).is_err());
    }
}
