use std::collections::BTreeSet;

use crate::convmetrics::{Feature, FeatureVector};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix with named rows (conversations) and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    row_ids: Vec<String>,
    columns: Vec<String>,
    data: Vec<T>,
}

/// Per-column statistics from [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization<T> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
    /// Columns with zero variance, mapped to all zeros.
    pub constant_columns: Vec<String>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(row_ids: Vec<String>, columns: Vec<String>, data: Vec<T>) -> Result<Self> {
        if data.len() != row_ids.len() * columns.len() {
            return Err(Error::Argument(format!(
                "{} values for a {}x{} matrix",
                data.len(),
                row_ids.len(),
                columns.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature matrix contains non-finite values".into()));
        }
        let unique: BTreeSet<&String> = row_ids.iter().collect();
        if unique.len() != row_ids.len() {
            return Err(Error::Argument("duplicate row ids".into()));
        }
        Ok(FeatureMatrix {
            row_ids,
            columns,
            data,
        })
    }

    pub fn from_rows(row_ids: Vec<String>, columns: Vec<String>, rows: &[Vec<T>]) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::Argument(format!(
                "row of length {} for {} columns",
                bad.len(),
                columns.len()
            )));
        }
        Self::new(row_ids, columns, rows.concat())
    }

    /// Selects `features` from each vector, in order.
    pub fn from_features(vectors: &[FeatureVector<T>], features: &[Feature]) -> Result<Self> {
        let rows: Vec<Vec<T>> = vectors.iter().map(|v| v.project(features)).collect();
        Self::from_rows(
            vectors.iter().map(|v| v.conversation_id.clone()).collect(),
            features.iter().map(|f| f.name().to_string()).collect(),
            &rows,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let c = self.columns.len();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.columns.len().max(1)).take(self.row_ids.len())
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_means(&self) -> Vec<T> {
        let n = T::from_count(self.n_rows().max(1));
        (0..self.n_cols())
            .map(|c| self.column(c).into_iter().fold(T::zero(), |a, b| a + b) / n)
            .collect()
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Lookup(format!("no column {n}")))
            })
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<T>> = (0..self.n_rows())
            .map(|r| idx.iter().map(|&c| self.get(r, c)).collect())
            .collect();
        Self::from_rows(
            self.row_ids.clone(),
            names.iter().map(|s| s.to_string()).collect(),
            &rows,
        )
    }

    /// Reads a features CSV: `conversation_id` then one numeric column each.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (header, records) = crate::csvio::read_table(text)?;
        if header.first().map(String::as_str) != Some("conversation_id") {
            return Err(Error::Parse {
                offset: 0,
                message: "first column must be conversation_id".into(),
            });
        }
        let mut ids = Vec::with_capacity(records.len());
        let mut rows = Vec::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            let mut it = rec.into_iter();
            ids.push(it.next().unwrap_or_default());
            let row = it
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .and_then(T::from_f64)
                        .ok_or_else(|| Error::validation(None, format!("row {}: bad number {v:?}", i + 1)))
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        Self::from_rows(ids, header[1..].to_vec(), &rows)
    }

    /// Inverse of [`FeatureMatrix::from_csv`], values to 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["conversation_id"];
        header.extend(self.columns.iter().map(String::as_str));
        crate::csvio::write_table(
            &header,
            self.rows().zip(&self.row_ids).map(|(row, id)| {
                std::iter::once(id.clone())
                    .chain(row.iter().map(|v| format!("{:.6}", v.to_f64().unwrap_or(f64::NAN))))
                    .collect()
            }),
        )
    }

    /// Reorders rows by `order` (a permutation of row indices).
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        FeatureMatrix {
            row_ids: order.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            data: order.iter().flat_map(|&i| self.row(i).to_vec()).collect(),
        }
    }
}

/// Z-scores every column (population standard deviation). Constant columns
/// become zeros and are reported.
pub fn standardize<T: Real>(m: &FeatureMatrix<T>) -> Result<(FeatureMatrix<T>, Standardization<T>)> {
    if m.n_rows() < 2 {
        return Err(Error::Argument("standardization needs at least two rows".into()));
    }
    let n = T::from_count(m.n_rows());
    let means = m.column_means();
    let mut stds = Vec::with_capacity(m.n_cols());
    let mut constant = Vec::new();
    for c in 0..m.n_cols() {
        let var = m
            .column(c)
            .into_iter()
            .fold(T::zero(), |a, v| a + (v - means[c]) * (v - means[c]))
            / n;
        let sd = var.sqrt();
        let scale = means[c].abs().max(T::one());
        if sd <= T::epsilon() * scale {
            log::warn!("column {} has zero variance; standardized to zeros", m.columns[c]);
            constant.push(m.columns[c].clone());
            stds.push(T::zero());
        } else {
            stds.push(sd);
        }
    }
    let data = (0..m.n_rows())
        .flat_map(|r| {
            let means = &means;
            let stds = &stds;
            (0..m.n_cols()).map(move |c| {
                if stds[c] == T::zero() {
                    T::zero()
                } else {
                    (m.get(r, c) - means[c]) / stds[c]
                }
            })
        })
        .collect();
    Ok((
        FeatureMatrix {
            row_ids: m.row_ids.clone(),
            columns: m.columns.clone(),
            data,
        },
        Standardization {
            means,
            stds,
            constant_columns: constant,
        },
    ))
}
