//! Hierarchical density-based clustering with excess-of-mass selection.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbors (counting the point itself) defining core distance.
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanParams {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }
}

struct CondensedEdge<T> {
    parent: usize,
    child: usize,
    lambda: T,
    size: usize,
}

/// Labels each row with a cluster id `0..k` or [`NOISE`]. Cluster ids are
/// numbered by first appearance in row order.
///
/// With fewer rows than `min_cluster_size` every row is noise. When the
/// hierarchy never splits into two sufficiently large parts, all rows form
/// a single cluster.
pub fn hdbscan<T: Real>(rows: &[Vec<T>], params: HdbscanParams) -> Result<Vec<i64>> {
    let n = rows.len();
    if params.min_cluster_size < 2 {
        return Err(Error::Argument("min_cluster_size must be at least 2".into()));
    }
    if n == 0 {
        return Err(Error::Argument("cannot cluster an empty matrix".into()));
    }
    if n < params.min_cluster_size {
        return Ok(vec![NOISE; n]);
    }
    let dist = |i: usize, j: usize| -> T {
        rows[i]
            .iter()
            .zip(&rows[j])
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            .sqrt()
    };
    let k = params.min_samples().clamp(1, n);
    let core: Vec<T> = (0..n)
        .map(|i| {
            let mut d: Vec<T> = (0..n).map(|j| dist(i, j)).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k - 1]
        })
        .collect();
    let mreach = |i: usize, j: usize| dist(i, j).max(core[i]).max(core[j]);

    // Prim's algorithm on the complete mutual-reachability graph
    let mut in_tree = vec![false; n];
    let mut best = vec![T::infinity(); n];
    let mut from = vec![0usize; n];
    let mut edges: Vec<(usize, usize, T)> = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = mreach(current, j);
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
            if next == usize::MAX || best[j] < best[next] {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .unwrap()
            .then(a.0.min(a.1).cmp(&b.0.min(b.1)))
            .then(a.0.max(a.1).cmp(&b.0.max(b.1)))
    });

    // single-linkage dendrogram: node n + m is the m-th merge
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let find = |parent: &mut Vec<usize>, mut x: usize| {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    };
    let mut children: Vec<(usize, usize, T)> = Vec::with_capacity(n - 1);
    let mut size = vec![1usize; 2 * n - 1];
    for (m, &(a, b, d)) in edges.iter().enumerate() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let node = n + m;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        children.push((ra, rb, d));
    }

    // distance 0 would give infinite lambda; cap it just above the densest level
    let min_pos = edges
        .iter()
        .map(|e| e.2)
        .filter(|d| *d > T::zero())
        .fold(T::infinity(), |a, b| a.min(b));
    let floor = if min_pos.is_finite() { min_pos * T::lit(1e-3) } else { T::one() };
    let lambda_of = |d: T| T::one() / d.max(floor);

    let leaves = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let (l, r, _) = children[x - n];
                stack.push(r);
                stack.push(l);
            }
        }
        out
    };

    // condense: cluster ids start at 0 for the root
    let mcs = params.min_cluster_size;
    let root = 2 * n - 2;
    let mut condensed: Vec<CondensedEdge<T>> = Vec::new();
    let mut birth: Vec<T> = vec![T::zero()];
    let mut cluster_parent: Vec<Option<usize>> = vec![None];
    let mut stack = vec![(root, 0usize)];
    while let Some((node, label)) = stack.pop() {
        if node < n {
            continue;
        }
        let (l, r, d) = children[node - n];
        let lambda = lambda_of(d);
        let (big_l, big_r) = (size[l] >= mcs, size[r] >= mcs);
        if big_l && big_r {
            for c in [l, r] {
                let id = birth.len();
                birth.push(lambda);
                cluster_parent.push(Some(label));
                condensed.push(CondensedEdge {
                    parent: label,
                    child: n + id,
                    lambda,
                    size: size[c],
                });
                stack.push((c, id));
            }
        } else {
            for (c, big) in [(l, big_l), (r, big_r)] {
                if big {
                    stack.push((c, label));
                } else {
                    for p in leaves(c) {
                        condensed.push(CondensedEdge {
                            parent: label,
                            child: p,
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
        }
    }
    let n_clusters = birth.len();
    if n_clusters == 1 {
        return Ok(vec![0; n]);
    }

    let mut stability = vec![T::zero(); n_clusters];
    for e in &condensed {
        stability[e.parent] =
            stability[e.parent] + (e.lambda - birth[e.parent]) * T::from_count(e.size);
    }

    // excess of mass, leaves up; children always have larger ids than parents
    let mut selected = vec![false; n_clusters];
    let mut subtree = stability.clone();
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for c in 1..n_clusters {
        kids[cluster_parent[c].unwrap()].push(c);
    }
    for c in (1..n_clusters).rev() {
        let child_sum = kids[c].iter().fold(T::zero(), |a, &k| a + subtree[k]);
        if kids[c].is_empty() || stability[c] >= child_sum {
            selected[c] = true;
            subtree[c] = stability[c];
        } else {
            subtree[c] = child_sum;
        }
    }
    // a selected ancestor overrides its descendants
    for c in 1..n_clusters {
        let mut p = cluster_parent[c];
        while let Some(q) = p {
            if selected[q] {
                selected[c] = false;
                break;
            }
            p = cluster_parent[q];
        }
    }

    // each point falls out of exactly one condensed cluster
    let mut raw = vec![NOISE; n];
    for e in condensed.iter().filter(|e| e.child < n) {
        let mut c = Some(e.parent);
        while let Some(q) = c {
            if selected[q] {
                raw[e.child] = q as i64;
                break;
            }
            c = cluster_parent[q];
        }
    }
    let mut remap = std::collections::BTreeMap::new();
    Ok(raw
        .into_iter()
        .map(|l| {
            if l == NOISE {
                NOISE
            } else {
                let next = remap.len() as i64;
                *remap.entry(l).or_insert(next)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(cx: f64, cy: f64, n: usize, offset: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let t = (i + offset) as f64;
                vec![cx + 0.3 * (t * 2.1).sin(), cy + 0.3 * (t * 3.7).cos()]
            })
            .collect()
    }

    #[test]
    fn separates_two_blobs() {
        let mut rows = blob(0.0, 0.0, 15, 0);
        rows.extend(blob(10.0, 10.0, 15, 100));
        let labels = hdbscan(&rows, HdbscanParams::new(5)).unwrap();
        assert!(labels[..15].iter().all(|&l| l == 0));
        assert!(labels[15..].iter().all(|&l| l == 1));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let rows = vec![vec![1.0, 2.0]; 12];
        assert_eq!(hdbscan(&rows, HdbscanParams::new(5)).unwrap(), vec![0; 12]);
    }

    #[test]
    fn too_few_rows_are_noise() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(hdbscan(&rows, HdbscanParams::new(5)).unwrap(), vec![NOISE; 4]);
    }

    #[test]
    fn far_outlier_is_noise() {
        let mut rows = blob(0.0, 0.0, 12, 0);
        rows.extend(blob(8.0, 0.0, 12, 50));
        rows.push(vec![100.0, 100.0]);
        let labels = hdbscan(&rows, HdbscanParams::new(5)).unwrap();
        assert_eq!(labels[24], NOISE);
        assert!(labels[..24].iter().all(|&l| l != NOISE));
    }
}
