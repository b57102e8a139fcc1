use std::collections::BTreeMap;

use serde::Serialize;

use super::hdbscan::NOISE;
use super::matrix::FeatureMatrix;
use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow<T> {
    pub label: i64,
    pub size: usize,
    pub means: Vec<T>,
}

/// Per-cluster means of unstandardized features; noise kept apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterProfile<T> {
    pub columns: Vec<String>,
    pub clusters: Vec<ProfileRow<T>>,
    pub noise: Option<ProfileRow<T>>,
}

impl<T: Real> ClusterProfile<T> {
    /// Size-weighted mean of all groups, noise included.
    pub fn recomposed_means(&self) -> Vec<T> {
        let groups: Vec<&ProfileRow<T>> = self.clusters.iter().chain(self.noise.as_ref()).collect();
        let total = T::from_count(groups.iter().map(|g| g.size).sum::<usize>().max(1));
        (0..self.columns.len())
            .map(|c| {
                groups
                    .iter()
                    .fold(T::zero(), |acc, g| acc + T::from_count(g.size) * g.means[c])
                    / total
            })
            .collect()
    }

    /// `cluster_label,size,<features>`; the noise row, if any, comes last.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["cluster_label", "size"];
        header.extend(self.columns.iter().map(String::as_str));
        crate::csvio::write_table(
            &header,
            self.clusters.iter().chain(self.noise.as_ref()).map(|g| {
                [g.label.to_string(), g.size.to_string()]
                    .into_iter()
                    .chain(g.means.iter().map(|v| format!("{:.6}", v.to_f64().unwrap_or(f64::NAN))))
                    .collect()
            }),
        )
    }
}

pub fn cluster_profile<T: Real>(
    features: &FeatureMatrix<T>,
    assignment: &ClusterAssignment<T>,
) -> Result<ClusterProfile<T>> {
    let mut groups: BTreeMap<i64, (usize, Vec<T>)> = BTreeMap::new();
    for (r, id) in features.row_ids().iter().enumerate() {
        let label = assignment
            .label_of(id)
            .ok_or_else(|| Error::Lookup(format!("no cluster label for {id}")))?;
        let entry = groups
            .entry(label)
            .or_insert_with(|| (0, vec![T::zero(); features.n_cols()]));
        entry.0 += 1;
        for (acc, &v) in entry.1.iter_mut().zip(features.row(r)) {
            *acc = *acc + v;
        }
    }
    let mut clusters = Vec::new();
    let mut noise = None;
    for (label, (size, sums)) in groups {
        let n = T::from_count(size);
        let row = ProfileRow {
            label,
            size,
            means: sums.into_iter().map(|s| s / n).collect(),
        };
        if label == NOISE {
            noise = Some(row);
        } else {
            clusters.push(row);
        }
    }
    Ok(ClusterProfile {
        columns: features.columns().to_vec(),
        clusters,
        noise,
    })
}
