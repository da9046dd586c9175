//! Density-based clustering (DBSCAN) over small 2D point sets.

use crate::geometry::Vec2;

/// Partition of the input indices into clusters and outliers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub outliers: Vec<usize>,
}

impl Clustering {
    /// Index of the largest cluster, ties broken toward the earliest.
    pub fn largest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.clusters.iter().enumerate() {
            if best.map_or(true, |b| c.len() > self.clusters[b].len()) {
                best = Some(i);
            }
        }
        best
    }
}

/// Clusters `points` with neighborhood radius `eps` (inclusive) and core
/// threshold `min_pts` (the neighborhood counts the point itself).
///
/// Clusters are grown in input order; a border point reachable from several
/// clusters joins the first. Indices inside each cluster are sorted.
pub fn cluster_points(points: &[Vec2], eps: f64, min_pts: usize) -> Clustering {
    assert!(eps > 0.0, "eps must be positive");
    let n = points.len();
    let eps_sq = eps * eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| (points[i] - points[j]).norm_sq() <= eps_sq).collect())
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts.max(1)).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters = Vec::new();
    for seed in 0..n {
        if label[seed].is_some() || !is_core[seed] {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![seed];
        label[seed] = Some(id);
        let mut frontier = vec![seed];
        while let Some(p) = frontier.pop() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if label[q].is_none() {
                    label[q] = Some(id);
                    members.push(q);
                    frontier.push(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let outliers = (0..n).filter(|&i| label[i].is_none()).collect();
    Clustering { clusters, outliers }
}
