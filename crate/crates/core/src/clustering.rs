//! Lloyd's K-means over flattened state trajectories.

use rand::seq::index;
use rand::Rng;

use crate::dynamics::Trajectory;
use crate::error::{PlanError, Result};

pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub iterations: usize,
}

impl ClusterResult {
    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Member indices of each cluster, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &k) in self.assignments.iter().enumerate() {
            out[k].push(i);
        }
        out
    }

    /// Within-cluster sum of squared distances.
    pub fn inertia<F: AsRef<[f64]>>(&self, features: &[F]) -> f64 {
        features
            .iter()
            .zip(&self.assignments)
            .map(|(f, &k)| sq_dist(f.as_ref(), &self.centroids[k]))
            .sum()
    }
}

/// Concatenated state sequence `[x_0, x_1, ...]`.
pub fn featurize(traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().flat_map(|x| x.to_array()).collect()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(f: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(f, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn recompute_centroids<F: AsRef<[f64]>>(features: &[F], assignments: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (f, &a) in features.iter().zip(assignments) {
        sizes[a] += 1;
        sums[a].iter_mut().zip(f.as_ref()).for_each(|(s, x)| *s += x);
    }
    for (s, &n) in sums.iter_mut().zip(&sizes) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    (sums, sizes)
}

/// Clusters `features` into `min(k, n)` groups.
///
/// Initial centroids are distinct data points drawn uniformly. Each round
/// assigns every feature to its nearest centroid and moves centroids to their
/// cluster means, stopping once assignments no longer change or after
/// `max_iters` rounds. A cluster that empties is reseeded at the feature
/// farthest from its own centroid.
pub fn kmeans<F: AsRef<[f64]>, R: Rng + ?Sized>(features: &[F], k: usize, rng: &mut R, max_iters: usize) -> Result<ClusterResult> {
    if features.is_empty() {
        return Err(PlanError::Empty("feature list"));
    }
    if k == 0 {
        return Err(PlanError::InvalidParam("cluster count must be at least 1".into()));
    }
    let dim = features[0].as_ref().len();
    if features.iter().any(|f| f.as_ref().len() != dim) {
        return Err(PlanError::InvalidParam("features differ in length".into()));
    }
    let n = features.len();
    let init = index::sample(rng, n, k.min(n)).into_vec();
    kmeans_from(features, &init, max_iters)
}

/// Lloyd iterations from the given initial centroid indices.
pub fn kmeans_from<F: AsRef<[f64]>>(features: &[F], init: &[usize], max_iters: usize) -> Result<ClusterResult> {
    if features.is_empty() {
        return Err(PlanError::Empty("feature list"));
    }
    if init.is_empty() || init.iter().any(|&i| i >= features.len()) {
        return Err(PlanError::InvalidParam("initial centroid indices out of range".into()));
    }
    let dim = features[0].as_ref().len();
    let n = features.len();
    let k = init.len();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| features[i].as_ref().to_vec()).collect();
    let mut assignments = vec![usize::MAX; n];
    let mut sizes = vec![0; k];
    let mut iterations = 0;

    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, f) in features.iter().enumerate() {
            let (a, d) = nearest(f.as_ref(), &centroids);
            dists[i] = d;
            if assignments[i] != a {
                assignments[i] = a;
                changed = true;
            }
        }
        let (mut next, mut next_sizes) = recompute_centroids(features, &assignments, k, dim);
        // Empty clusters take over the worst-fit points.
        while let Some(empty) = next_sizes.iter().position(|&s| s == 0) {
            let far = (0..n)
                .filter(|&i| next_sizes[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            let Some(far) = far else { break };
            assignments[far] = empty;
            dists[far] = 0.0;
            changed = true;
            (next, next_sizes) = recompute_centroids(features, &assignments, k, dim);
        }
        centroids = next;
        sizes = next_sizes;
        if !changed {
            break;
        }
    }
    Ok(ClusterResult { assignments, centroids, sizes, iterations })
}
