//! k-means (Lloyd iterations, k-means++ seeding) over representation
//! vectors, with Euclidean distances to centroids.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::dataset::SampleId;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest objective wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::config("tol", "must be non-negative"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    centroids: Array2<f64>,
    ids: Vec<SampleId>,
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    objective: f64,
    history: Vec<f64>,
    lookup: HashMap<SampleId, usize>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn centroid(&self, k: usize) -> Result<ArrayView1<'_, f64>> {
        if k >= self.k() {
            return Err(Error::BadClusterIndex {
                index: k,
                count: self.k(),
            });
        }
        Ok(self.centroids.row(k))
    }

    /// Clustered ids, in the order they were supplied.
    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    /// Cluster index (0-based) of each clustered id, parallel to [`ids`](Self::ids).
    pub fn assignments(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, id: SampleId) -> Option<usize> {
        self.lookup.get(&id).map(|&r| self.assignment[r])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Sum of squared distances of every point to its assigned centroid.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Objective after the initial assignment and after every iteration.
    pub fn objective_history(&self) -> &[f64] {
        &self.history
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance between centroid `k` and `h`.
pub fn centroid_distance(model: &ClusterModel, k: usize, h: ArrayView1<f64>) -> Result<f64> {
    let c = model.centroid(k)?;
    if h.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: c.len(),
            found: h.len(),
        });
    }
    Ok(sq_dist(c, h).sqrt())
}

/// Assigns every point to its nearest centroid (lowest index on ties).
/// Returns per-point squared distances.
fn assign(points: &ArrayView2<f64>, centroids: &Array2<f64>, assignment: &mut [usize]) -> Vec<f64> {
    let mut d2 = vec![0.0; points.nrows()];
    for (i, p) in points.rows().into_iter().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (k, c) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        assignment[i] = best.0;
        d2[i] = best.1;
    }
    d2
}

fn plus_plus_seed<R: Rng + ?Sized>(points: &ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            let d = sq_dist(p, points.row(pick));
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    centroids
}

struct LloydRun {
    centroids: Array2<f64>,
    assignment: Vec<usize>,
    objective: f64,
    history: Vec<f64>,
}

fn lloyd(points: &ArrayView2<f64>, mut centroids: Array2<f64>, cfg: &KMeansConfig) -> LloydRun {
    let (n, k) = (points.nrows(), centroids.nrows());
    let mut assignment = vec![0; n];
    let mut d2 = assign(points, &centroids, &mut assignment);
    let mut history = vec![d2.iter().sum::<f64>()];
    for _ in 0..cfg.max_iter {
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let c = assignment[i];
            let mut row = sums.row_mut(c);
            row += &p;
            counts[c] += 1;
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                next.row_mut(c).assign(&mean);
            }
        }
        // Empty clusters jump to the point farthest from its own centroid.
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n).fold(0, |b, i| if d2[i] > d2[b] { i } else { b });
            next.row_mut(c).assign(&points.row(far));
            d2[far] = 0.0;
        }
        let shift = next
            .rows()
            .into_iter()
            .zip(centroids.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        d2 = assign(points, &centroids, &mut assignment);
        history.push(d2.iter().sum());
        if shift < cfg.tol {
            break;
        }
    }
    LloydRun {
        centroids,
        objective: *history.last().expect("non-empty"),
        assignment,
        history,
    }
}

fn build_model(ids: &[SampleId], run: LloydRun) -> ClusterModel {
    let mut sizes = vec![0; run.centroids.nrows()];
    for &c in &run.assignment {
        sizes[c] += 1;
    }
    let lookup = ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    ClusterModel {
        centroids: run.centroids,
        ids: ids.to_vec(),
        assignment: run.assignment,
        sizes,
        objective: run.objective,
        history: run.history,
        lookup,
    }
}

fn check_inputs(ids: &[SampleId], points: &ArrayView2<f64>, k: usize) -> Result<()> {
    if ids.len() != points.nrows() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            found: points.nrows(),
        });
    }
    if k == 0 || points.nrows() < k {
        return Err(Error::TooFewPoints {
            n: points.nrows(),
            k,
        });
    }
    Ok(())
}

/// Fits `k` clusters to `points` (row `i` belongs to `ids[i]`).
pub fn kmeans_fit(
    ids: &[SampleId],
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<ClusterModel> {
    check_inputs(ids, &points, k)?;
    let mut rng = rng::seeded(seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = plus_plus_seed(&points, k, &mut rng);
        let run = lloyd(&points, init, cfg);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(build_model(ids, best.expect("at least one restart")))
}

/// Runs Lloyd iterations from the given initial centroids.
pub fn kmeans_fit_from(
    ids: &[SampleId],
    points: ArrayView2<f64>,
    init: Array2<f64>,
    cfg: &KMeansConfig,
) -> Result<ClusterModel> {
    check_inputs(ids, &points, init.nrows())?;
    if init.ncols() != points.ncols() {
        return Err(Error::DimensionMismatch {
            expected: points.ncols(),
            found: init.ncols(),
        });
    }
    Ok(build_model(ids, lloyd(&points, init, cfg)))
}

/// Mean vector of each cluster's members (diagnostics).
pub fn member_means(model: &ClusterModel, points: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(model.centroids.raw_dim());
    for (i, p) in points.rows().into_iter().enumerate() {
        let mut row = out.row_mut(model.assignment[i]);
        row += &p;
    }
    for (c, &s) in model.sizes.iter().enumerate() {
        if s > 0 {
            let mut row = out.row_mut(c);
            row /= s as f64;
        }
    }
    out
}

/// Distances from centroid `k` to a batch of vectors.
pub fn distances_to(model: &ClusterModel, k: usize, points: ArrayView2<f64>) -> Result<Array1<f64>> {
    let c = model.centroid(k)?;
    Ok(points.rows().into_iter().map(|p| sq_dist(c, p).sqrt()).collect())
}
