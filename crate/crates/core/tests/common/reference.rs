//! Brute-force acquisition reference, written from the selection rules
//! alone: no library selection code is reused.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use alforge::acquisition::RadiusRefresh;
use alforge::{ClusterModel, SampleId, Strategy};

/// One randomized acquisition instance. Sample ids are row indices.
pub struct Pool {
    pub classes: usize,
    pub x: Array2<f64>,
    /// Oracle answer per sample: `1..=K`, or `K + 1` for non-iD.
    pub labels: Vec<usize>,
    pub labeled: Vec<SampleId>,
    /// Softmax outputs over `K + 1` classes, one row per sample.
    pub probs: Array2<f64>,
    pub n_id: usize,
    pub seed: u64,
}

impl Pool {
    fn is_labeled(&self, id: SampleId) -> bool {
        self.labeled.binary_search(&id).is_ok()
    }

    fn is_id(&self, id: SampleId) -> bool {
        self.labels[id] <= self.classes
    }
}

fn shuffled(mut v: Vec<SampleId>, seed: u64) -> Vec<SampleId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

/// Baselines: drop labeled samples and those predicted auxiliary, order,
/// then annotate until `n_id` iD answers.
pub fn reference_stream(pool: &Pool, strategy: Strategy) -> (Vec<SampleId>, bool) {
    let k = pool.classes;
    let mut keep = Vec::new();
    for id in 0..pool.labels.len() {
        let p = pool.probs.row(id);
        let best_known = (0..k).map(|c| p[c]).fold(f64::NEG_INFINITY, f64::max);
        let auxiliary = p[k] > best_known;
        if !pool.is_labeled(id) && !auxiliary {
            keep.push(id);
        }
    }
    let stream = match strategy {
        Strategy::Random => shuffled(keep, pool.seed),
        _ => {
            let score = |id: SampleId| -> f64 {
                let p = pool.probs.row(id);
                if strategy == Strategy::Entropy {
                    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
                } else {
                    1.0 - p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            };
            let mut scored: Vec<(f64, SampleId)> = keep.into_iter().map(|id| (score(id), id)).collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            scored.into_iter().map(|s| s.1).collect()
        }
    };
    let mut picked = Vec::new();
    let mut found = 0;
    for id in stream {
        if found == pool.n_id {
            break;
        }
        picked.push(id);
        found += usize::from(pool.is_id(id));
    }
    (picked, found < pool.n_id)
}

/// Largest remainder with capping: each round hands out the residual
/// proportionally among clusters that still have room.
pub fn reference_quotas(sizes: &[usize], batch: usize) -> Vec<usize> {
    let target = batch.min(sizes.iter().sum());
    let mut q = vec![0; sizes.len()];
    while q.iter().sum::<usize>() < target {
        let rest = target - q.iter().sum::<usize>();
        let open: Vec<usize> = (0..sizes.len()).filter(|&c| q[c] < sizes[c]).collect();
        let w: usize = open.iter().map(|&c| sizes[c]).sum();
        let mut add: BTreeMap<usize, usize> = open.iter().map(|&c| (c, rest * sizes[c] / w)).collect();
        let mut by_remainder = open.clone();
        by_remainder.sort_by_key(|&c| (std::cmp::Reverse(rest * sizes[c] % w), c));
        let floors: usize = add.values().sum();
        for &c in by_remainder.iter().take(rest - floors) {
            *add.get_mut(&c).unwrap() += 1;
        }
        for (c, a) in add {
            q[c] = (q[c] + a).min(sizes[c]);
        }
    }
    q
}

/// Cluster strategies on a fitted model whose rows are `pool.x`.
pub fn reference_cluster(
    pool: &Pool,
    model: &ClusterModel,
    strategy: Strategy,
    refresh: RadiusRefresh,
) -> (Vec<SampleId>, bool) {
    let k = model.k();
    let n = pool.labels.len();
    let cluster = model.assignments();
    let centroids = model.centroids();
    let delta: Vec<f64> = (0..n)
        .map(|i| {
            let c = centroids.row(cluster[i]);
            pool.x.row(i).iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })
        .collect();

    // The cluster whose labeled members are most often non-iD.
    let excluded = (!pool.labeled.is_empty()).then(|| {
        let ratio = |c: usize| {
            let members: Vec<_> = pool.labeled.iter().filter(|&&id| cluster[id] == c).collect();
            let bad = members.iter().filter(|&&&id| !pool.is_id(id)).count();
            if members.is_empty() {
                0.0
            } else {
                bad as f64 / members.len() as f64
            }
        };
        let mut best = 0;
        for c in 1..k {
            if ratio(c) > ratio(best) {
                best = c;
            }
        }
        best
    });

    let mut radius = vec![f64::INFINITY; k];
    for &id in &pool.labeled {
        if !pool.is_id(id) {
            radius[cluster[id]] = radius[cluster[id]].min(delta[id]);
        }
    }
    let mut open: Vec<Vec<SampleId>> = vec![Vec::new(); k];
    for id in 0..n {
        if !pool.is_labeled(id) {
            open[cluster[id]].push(id);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(pool.seed);
    let mut picked = Vec::new();
    let mut found = 0;
    while found < pool.n_id {
        let eligible: Vec<usize> = (0..k).filter(|&c| Some(c) != excluded && !open[c].is_empty()).collect();
        if eligible.is_empty() {
            return (picked, true);
        }
        let sizes: Vec<usize> = eligible.iter().map(|&c| open[c].len()).collect();
        let quotas = reference_quotas(&sizes, pool.n_id - found);
        let mut after_pass = radius.clone();
        for (&c, &quota) in eligible.iter().zip(&quotas) {
            let mut chosen = Vec::new();
            for _ in 0..quota {
                let id = match strategy {
                    Strategy::RandomCl => {
                        let pos = rng.random_range(0..open[c].len());
                        open[c].remove(pos)
                    }
                    _ => {
                        let r = radius[c];
                        let inside = open[c].iter().filter(|&&i| delta[i] <= r);
                        let far_inside = inside.fold(None, |best: Option<SampleId>, &i| match best {
                            Some(b) if delta[b] >= delta[i] => Some(b),
                            _ => Some(i),
                        });
                        let near_outside = open[c].iter().fold(None, |best: Option<SampleId>, &i| match best {
                            Some(b) if delta[b] <= delta[i] => Some(b),
                            _ => Some(i),
                        });
                        let id = far_inside.or(near_outside).unwrap();
                        open[c].retain(|&i| i != id);
                        id
                    }
                };
                if refresh == RadiusRefresh::PerAnnotation && strategy == Strategy::DistanceCl {
                    picked.push(id);
                    if pool.is_id(id) {
                        found += 1;
                    } else {
                        radius[c] = radius[c].min(delta[id]);
                        after_pass[c] = radius[c];
                    }
                } else {
                    chosen.push(id);
                }
            }
            for id in chosen {
                picked.push(id);
                if pool.is_id(id) {
                    found += 1;
                } else {
                    after_pass[c] = after_pass[c].min(delta[id]);
                }
            }
        }
        radius = after_pass;
    }
    (picked, false)
}
