use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Hyperparameters for the fuzzy-graph neighbor embedding (UMAP-style).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeighborEmbeddingConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
}

impl Default for NeighborEmbeddingConfig {
    fn default() -> Self {
        NeighborEmbeddingConfig {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 500,
            learning_rate: 1.0,
            negative_sample_rate: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionMethod {
    #[default]
    PrincipalComponents,
    NeighborEmbedding(NeighborEmbeddingConfig),
}

/// A fitted principal-components model.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// Unit loading vectors, strongest first. All components are kept.
    pub components: Vec<Vec<T>>,
    pub explained_variance: Vec<T>,
}

/// Explained-variance diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub explained_ratio: Vec<f64>,
    pub cumulative_ratio: Vec<f64>,
    /// Smallest component count reaching 95% of the variance.
    pub components_for_95: usize,
    /// Variance retained by the requested dimensionality.
    pub retained: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction<T> {
    pub embedding: FeatureMatrix<T>,
    pub pca: Option<PcaModel<T>>,
    pub variance: Option<VarianceReport>,
}

impl<T: Real> PcaModel<T> {
    pub fn fit(m: &FeatureMatrix<T>) -> Result<Self> {
        let (n, d) = (m.n_rows(), m.n_cols());
        if n < 2 || d == 0 {
            return Err(Error::Argument("principal components need ≥2 rows and ≥1 column".into()));
        }
        let mean = m.column_means();
        let centered = nalgebra::DMatrix::from_fn(n, d, |r, c| {
            (m.get(r, c) - mean[c]).to_f64().unwrap_or(f64::NAN)
        });
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let components = order
            .iter()
            .map(|&i| {
                let col = eig.eigenvectors.column(i);
                // sign convention: largest-magnitude loading is positive
                let lead = col.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
                let sign = if lead < 0.0 { -1.0 } else { 1.0 };
                col.iter().map(|&x| T::lit(sign * x)).collect()
            })
            .collect();
        let explained_variance = order
            .iter()
            .map(|&i| T::lit(eig.eigenvalues[i].max(0.0)))
            .collect();
        Ok(PcaModel {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn project(&self, row: &[T], dims: usize) -> Vec<T> {
        self.components[..dims]
            .iter()
            .map(|c| {
                c.iter()
                    .zip(row.iter().zip(&self.mean))
                    .fold(T::zero(), |acc, (&w, (&x, &mu))| acc + w * (x - mu))
            })
            .collect()
    }

    /// Maps a score vector back to feature space.
    pub fn reconstruct(&self, scores: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (s, c) in scores.iter().zip(&self.components) {
            for (o, &w) in out.iter_mut().zip(c) {
                *o = *o + *s * w;
            }
        }
        out
    }

    pub fn variance_report(&self, dims: usize) -> VarianceReport {
        let total = self
            .explained_variance
            .iter()
            .fold(T::zero(), |a, &b| a + b)
            .to_f64()
            .unwrap_or(0.0);
        let explained_ratio: Vec<f64> = self
            .explained_variance
            .iter()
            .map(|v| if total > 0.0 { v.to_f64().unwrap_or(0.0) / total } else { 0.0 })
            .collect();
        let cumulative_ratio: Vec<f64> = explained_ratio
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        let components_for_95 = cumulative_ratio
            .iter()
            .position(|&c| c >= 0.95 - 1e-12)
            .map(|p| p + 1)
            .unwrap_or(cumulative_ratio.len());
        let retained = if dims == 0 { 0.0 } else { cumulative_ratio[dims - 1] };
        VarianceReport {
            explained_ratio,
            cumulative_ratio,
            components_for_95,
            retained,
        }
    }
}

/// Projects rows of `m` to `dims` columns named `dim_1..`.
pub fn reduce<T: Real>(
    m: &FeatureMatrix<T>,
    dims: usize,
    method: ReductionMethod,
    seed: u64,
) -> Result<Reduction<T>> {
    if dims == 0 || dims >= m.n_cols() {
        return Err(Error::Argument(format!(
            "cannot reduce {} columns to {dims} dimensions",
            m.n_cols()
        )));
    }
    let pca = PcaModel::fit(m)?;
    let scores: Vec<Vec<T>> = m.rows().map(|r| pca.project(r, dims)).collect();
    let names: Vec<String> = (1..=dims).map(|i| format!("dim_{i}")).collect();
    match method {
        ReductionMethod::PrincipalComponents => {
            let variance = Some(pca.variance_report(dims));
            Ok(Reduction {
                embedding: FeatureMatrix::from_rows(m.row_ids().to_vec(), names, &scores)?,
                pca: Some(pca),
                variance,
            })
        }
        ReductionMethod::NeighborEmbedding(cfg) => {
            let coords = neighbor_embedding(m, &scores, dims, &cfg, seed)?;
            Ok(Reduction {
                embedding: FeatureMatrix::from_rows(m.row_ids().to_vec(), names, &coords)?,
                pca: None,
                variance: None,
            })
        }
    }
}

/// Fits the curve `1 / (1 + a x^(2b))` to the target membership function by
/// Levenberg-Marquardt.
pub fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let curve = |a: f64, b: f64, x: f64| 1.0 / (1.0 + a * x.powf(2.0 * b));
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter().zip(&ys).map(|(&x, &y)| (curve(a, b, x) - y).powi(2)).sum()
    };
    let (mut a, mut b, mut lambda) = (1.0f64, 1.0f64, 1e-3f64);
    let mut err = sse(a, b);
    for _ in 0..500 {
        // normal equations for the 2-parameter Gauss-Newton step
        let (mut jtj, mut jtr) = ([0.0f64; 3], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let r = curve(a, b, x) - y;
            let (da, db) = if x > 0.0 {
                let p = x.powf(2.0 * b);
                let denom = (1.0 + a * p).powi(2);
                (-p / denom, -a * p * 2.0 * x.ln() / denom)
            } else {
                (0.0, 0.0)
            };
            jtj[0] += da * da;
            jtj[1] += da * db;
            jtj[2] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        let (m00, m01, m11) = (jtj[0] * (1.0 + lambda), jtj[1], jtj[2] * (1.0 + lambda));
        let det = m00 * m11 - m01 * m01;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * jtr[0] - m01 * jtr[1]) / det;
        let step_b = -(m00 * jtr[1] - m01 * jtr[0]) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let new_err = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
        if new_err < err {
            let done = (err - new_err) < 1e-15 * err.max(1e-300);
            a = na;
            b = nb;
            err = new_err;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Symmetrized fuzzy k-nearest-neighbor graph as a weighted edge list.
fn fuzzy_graph<T: Real>(m: &FeatureMatrix<T>, k: usize) -> Vec<(usize, usize, T)> {
    let n = m.n_rows();
    let mut weights = vec![T::zero(); n * n];
    let target = T::from_count(k).log2();
    for i in 0..n {
        let mut nbrs: Vec<(T, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sq_dist(m.row(i), m.row(j)).sqrt(), j))
            .collect();
        nbrs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        nbrs.truncate(k);
        let rho = nbrs
            .iter()
            .map(|(d, _)| *d)
            .find(|d| *d > T::zero())
            .unwrap_or(T::zero());
        let membership = |sigma: T| -> T {
            nbrs.iter().fold(T::zero(), |acc, &(d, _)| {
                acc + (-(d - rho).max(T::zero()) / sigma).exp()
            })
        };
        let (mut lo, mut hi, mut sigma) = (T::zero(), T::infinity(), T::one());
        for _ in 0..64 {
            let psum = membership(sigma);
            if (psum - target).abs() < T::lit(1e-5) {
                break;
            }
            if psum > target {
                hi = sigma;
                sigma = (lo + hi) / T::lit(2.0);
            } else {
                lo = sigma;
                sigma = if hi.is_infinite() { sigma * T::lit(2.0) } else { (lo + hi) / T::lit(2.0) };
            }
        }
        let mean_d = nbrs.iter().fold(T::zero(), |a, (d, _)| a + *d) / T::from_count(nbrs.len().max(1));
        sigma = sigma.max(T::lit(1e-3) * mean_d).max(T::min_positive_value());
        for &(d, j) in &nbrs {
            weights[i * n + j] = (-(d - rho).max(T::zero()) / sigma).exp();
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (weights[i * n + j], weights[j * n + i]);
            let w = a + b - a * b;
            if w > T::zero() {
                edges.push((i, j, w));
            }
        }
    }
    edges
}

fn neighbor_embedding<T: Real>(
    m: &FeatureMatrix<T>,
    init: &[Vec<T>],
    dims: usize,
    cfg: &NeighborEmbeddingConfig,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let n = m.n_rows();
    if cfg.n_neighbors < 2 || cfg.epochs == 0 {
        return Err(Error::Argument("neighbor embedding needs n_neighbors ≥ 2 and epochs ≥ 1".into()));
    }
    if !(cfg.min_dist >= 0.0 && cfg.spread > 0.0 && cfg.min_dist <= cfg.spread) {
        return Err(Error::Argument("need 0 ≤ min_dist ≤ spread and spread > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // PCA initialization rescaled to a box of half-width 10, with small jitter
    let max_abs = init
        .iter()
        .flatten()
        .fold(T::zero(), |a, &v| a.max(v.abs()));
    let scale = if max_abs > T::zero() { T::lit(10.0) / max_abs } else { T::one() };
    let mut y: Vec<Vec<T>> = init
        .iter()
        .map(|r| {
            r.iter()
                .map(|&v| v * scale + T::lit(rng.gen_range(-1e-4..1e-4)))
                .collect()
        })
        .collect();
    if n <= 2 {
        return Ok(y);
    }
    let k = cfg.n_neighbors.min(n - 1);
    let edges = fuzzy_graph(m, k);
    if edges.is_empty() {
        return Ok(y);
    }
    let (a, b) = fit_ab(cfg.spread, cfg.min_dist);
    let (a, b) = (T::lit(a), T::lit(b));
    let max_w = edges.iter().fold(T::zero(), |acc, e| acc.max(e.2));
    let epochs_per_sample: Vec<f64> = edges
        .iter()
        .map(|e| (max_w / e.2).to_f64().unwrap_or(f64::INFINITY))
        .collect();
    let neg_rate = cfg.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate.max(1e-12)).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();
    let clip = |g: T| g.max(T::lit(-4.0)).min(T::lit(4.0));
    let two = T::lit(2.0);
    for epoch in 0..cfg.epochs {
        let alpha = T::lit(cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64));
        let e = epoch as f64;
        for (idx, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e {
                continue;
            }
            let d2 = sq_dist(&y[i], &y[j]);
            let coeff = if d2 > T::zero() {
                -two * a * b * d2.powf(b - T::one()) / (a * d2.powf(b) + T::one())
            } else {
                T::zero()
            };
            for c in 0..dims {
                let g = clip(coeff * (y[i][c] - y[j][c])) * alpha;
                y[i][c] = y[i][c] + g;
                y[j][c] = y[j][c] - g;
            }
            next_sample[idx] += epochs_per_sample[idx];
            if neg_rate > 0.0 {
                let n_neg = ((e - next_negative[idx]) / epochs_per_negative[idx]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let kk = rng.gen_range(0..n);
                    if kk == i {
                        continue;
                    }
                    let d2 = sq_dist(&y[i], &y[kk]);
                    let coeff = two * b / ((T::lit(0.001) + d2) * (a * d2.powf(b) + T::one()));
                    for c in 0..dims {
                        let g = if d2 > T::zero() {
                            clip(coeff * (y[i][c] - y[kk][c]))
                        } else {
                            T::lit(4.0)
                        };
                        y[i][c] = y[i][c] + g * alpha;
                    }
                }
                next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
            }
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("neighbor embedding diverged".into()));
    }
    Ok(y)
}
