//! Corpus-level standardization, reduction, density clustering and profiles.

mod ari;
mod hdbscan;
mod matrix;
mod profile;
mod reduce;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use ari::adjusted_rand_index;
pub use hdbscan::{hdbscan, HdbscanParams, NOISE};
pub use matrix::{standardize, FeatureMatrix, Standardization};
pub use profile::{cluster_profile, ClusterProfile, ProfileRow};
pub use reduce::{
    fit_ab, reduce, NeighborEmbeddingConfig, PcaModel, Reduction, ReductionMethod, VarianceReport,
};

use crate::convmetrics::Feature;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cluster labels and 2-D layout for a set of conversations.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<T> {
    row_ids: Vec<String>,
    labels: Vec<i64>,
    embedding_2d: Vec<[T; 2]>,
    config_echo: Value,
}

impl<T: Real> ClusterAssignment<T> {
    pub fn new(
        row_ids: Vec<String>,
        labels: Vec<i64>,
        embedding_2d: Vec<[T; 2]>,
        config_echo: Value,
    ) -> Result<Self> {
        if labels.len() != row_ids.len() || embedding_2d.len() != row_ids.len() {
            return Err(Error::Argument("assignment arrays differ in length".into()));
        }
        Ok(ClusterAssignment {
            row_ids,
            labels,
            embedding_2d,
            config_echo,
        })
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn embedding_2d(&self) -> &[[T; 2]] {
        &self.embedding_2d
    }

    pub fn config_echo(&self) -> &Value {
        &self.config_echo
    }

    pub fn label_of(&self, id: &str) -> Option<i64> {
        self.row_ids.iter().position(|r| r == id).map(|i| self.labels[i])
    }

    pub fn label_map(&self) -> BTreeMap<&str, i64> {
        self.row_ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
            .collect()
    }

    /// Number of non-noise clusters.
    pub fn cluster_count(&self) -> usize {
        let mut seen: Vec<i64> = self.labels.iter().copied().filter(|&l| l != NOISE).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// `conversation_id,cluster_label,x,y`
    pub fn to_csv(&self) -> String {
        crate::csvio::write_table(
            &["conversation_id", "cluster_label", "x", "y"],
            self.row_ids
                .iter()
                .zip(&self.labels)
                .zip(&self.embedding_2d)
                .map(|((id, l), xy)| {
                    vec![
                        id.clone(),
                        l.to_string(),
                        format!("{:.6}", xy[0].to_f64().unwrap_or(f64::NAN)),
                        format!("{:.6}", xy[1].to_f64().unwrap_or(f64::NAN)),
                    ]
                })
                .collect::<Vec<_>>(),
        )
    }

    fn with_layout(mut self, layout: &FeatureMatrix<T>) -> Self {
        self.embedding_2d = layout.rows().map(|r| [r[0], r[1]]).collect();
        self
    }
}

/// Density clustering of the rows of `m`. The 2-D layout is taken from the
/// first two columns (zero-padded).
pub fn cluster<T: Real>(
    m: &FeatureMatrix<T>,
    params: HdbscanParams,
    seed: u64,
) -> Result<ClusterAssignment<T>> {
    let rows: Vec<Vec<T>> = m.rows().map(<[T]>::to_vec).collect();
    let labels = hdbscan(&rows, params)?;
    let embedding_2d = rows
        .iter()
        .map(|r| [r.first().copied().unwrap_or(T::zero()), r.get(1).copied().unwrap_or(T::zero())])
        .collect();
    let echo = json!({
        "method": "hdbscan",
        "min_cluster_size": params.min_cluster_size,
        "min_samples": params.min_samples(),
        "seed": seed,
    });
    ClusterAssignment::new(m.row_ids().to_vec(), labels, embedding_2d, echo)
}

/// Settings for [`run_clustering`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Feature names, in column order.
    pub features: Vec<String>,
    pub dims: usize,
    pub method: ReductionMethod,
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            features: Feature::REDUCED.iter().map(|f| f.name().to_string()).collect(),
            dims: 3,
            method: ReductionMethod::PrincipalComponents,
            min_cluster_size: 5,
            min_samples: None,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    /// All 23 features reduced to 5 dimensions.
    pub fn full_preset() -> Self {
        ClusterConfig {
            features: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
            dims: 5,
            ..Default::default()
        }
    }

    pub fn params(&self) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringResult<T> {
    pub features: FeatureMatrix<T>,
    pub standardization: Standardization<T>,
    pub reduction: Reduction<T>,
    pub assignment: ClusterAssignment<T>,
    pub profile: ClusterProfile<T>,
}

/// standardize → reduce → cluster → profile, plus a second 2-D reduction
/// for plotting.
pub fn run_clustering<T: Real>(m: &FeatureMatrix<T>, cfg: &ClusterConfig) -> Result<ClusteringResult<T>> {
    let names: Vec<&str> = cfg.features.iter().map(String::as_str).collect();
    let features = m.select_columns(&names)?;
    if features.n_rows() < cfg.min_cluster_size {
        log::warn!(
            "{} rows is below min_cluster_size {}; every row will be noise",
            features.n_rows(),
            cfg.min_cluster_size
        );
    }
    let (z, standardization) = standardize(&features)?;
    let reduction = reduce(&z, cfg.dims, cfg.method, cfg.seed)?;
    let layout = if cfg.dims == 2 {
        reduction.embedding.clone()
    } else {
        reduce(&z, 2, cfg.method, cfg.seed)?.embedding
    };
    let mut assignment = cluster(&reduction.embedding, cfg.params(), cfg.seed)?.with_layout(&layout);
    assignment.config_echo = json!({
        "features": cfg.features,
        "standardization": "zscore_population",
        "constant_columns": standardization.constant_columns,
        "reduction": cfg.method,
        "dims": cfg.dims,
        "layout_dims": 2,
        "clustering": "hdbscan",
        "min_cluster_size": cfg.min_cluster_size,
        "min_samples": cfg.params().min_samples(),
        "seed": cfg.seed,
        "rows": features.n_rows(),
        "variance": reduction.variance,
    });
    let profile = cluster_profile(&features, &assignment)?;
    Ok(ClusteringResult {
        features,
        standardization,
        reduction,
        assignment,
        profile,
    })
}
