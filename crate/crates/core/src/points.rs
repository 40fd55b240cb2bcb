use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A row-major set of points in `R^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "points must have at least one coordinate"));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                context: "point buffer length",
                expected: dim * (data.len() / dim + 1),
                actual: data.len(),
            });
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("point rows"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "point row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Points::new(dim, data)
    }

    /// One-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Self {
        Points {
            dim: 1,
            data: values.to_vec(),
        }
    }

    /// Appends `treatments` as a trailing coordinate to each covariate row.
    pub fn with_trailing(covariates: &Points, treatments: &[f64]) -> Result<Self> {
        if covariates.len() != treatments.len() {
            return Err(Error::DimensionMismatch {
                context: "treatments vs covariate rows",
                expected: covariates.len(),
                actual: treatments.len(),
            });
        }
        let dim = covariates.dim + 1;
        let mut data = Vec::with_capacity(dim * treatments.len());
        for (row, &a) in covariates.rows().zip(treatments) {
            data.extend_from_slice(row);
            data.push(a);
        }
        Ok(Points { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            dim: self.dim,
            data,
        }
    }

    /// Drops the trailing `k` coordinates of every row.
    pub fn leading(&self, keep: usize) -> Result<Points> {
        if keep == 0 || keep > self.dim {
            return Err(Error::DimensionMismatch {
                context: "leading block width",
                expected: self.dim,
                actual: keep,
            });
        }
        let data = self.rows().flat_map(|r| r[..keep].iter().copied()).collect();
        Ok(Points { dim: keep, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_concatenation() {
        let x = Points::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let z = Points::with_trailing(&x, &[5.0, 6.0]).unwrap();
        assert_eq!(z.dim(), 3);
        assert_eq!(z.row(1), &[3.0, 4.0, 6.0]);
        assert_eq!(z.leading(2).unwrap(), x);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            Points::from_rows(&rows),
            Err(Error::DimensionMismatch { expected: 2, actual: 1, .. })
        ));
    }
}
