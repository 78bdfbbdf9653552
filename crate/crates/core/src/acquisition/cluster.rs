//! Cluster-based acquisition on the learned feature space.
//!
//! Both strategies share one loop. Each outer pass drops the cluster with
//! the highest share of labeled non-iD members, apportions the residual iD
//! shortfall over the remaining clusters by their unlabeled sizes, and
//! fills each cluster's quota with annotated picks. Passes repeat until
//! enough iD samples are annotated or no eligible cluster has candidates.
//!
//! Distance(CL) picks by distance `delta` to the cluster centroid relative
//! to the cluster radius, the distance of the labeled non-iD member closest
//! to the centroid (`+inf` when the cluster has none): the farthest
//! candidate with `delta <= radius` first, and once none is left the
//! nearest candidate outside. Ties go to the lower sample id.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use ndarray::ArrayView2;
use rand::Rng;

use super::{AcquisitionOutcome, AcquisitionRequest, Strategy};
use crate::clustering::ClusterModel;
use crate::dataset::SampleId;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::pool::{LabeledExample, PoolState};
use crate::rng::{self, SeededRng};

/// When a newly found non-iD sample may shrink its cluster's radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusRefresh {
    /// Radii are recomputed between outer passes only.
    #[default]
    PerPass,
    /// Radii shrink right after each annotation.
    PerAnnotation,
}

/// One selection made by a cluster strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterPick {
    pub pass: usize,
    pub cluster: usize,
    pub sample_id: SampleId,
    pub delta: f64,
    /// Radius in force when the pick was made.
    pub radius: f64,
    pub inside: bool,
}

/// Index of the largest `non_id / total` ratio; empty clusters score 0 and
/// ties go to the lower index. Ratios are compared exactly.
pub fn nonid_proportion_argmax(counts: &[(usize, usize)]) -> usize {
    let ratio_gt = |a: (usize, usize), b: (usize, usize)| -> bool {
        let (an, ad) = if a.1 == 0 { (0, 1) } else { a };
        let (bn, bd) = if b.1 == 0 { (0, 1) } else { b };
        (an as u128) * (bd as u128) > (bn as u128) * (ad as u128)
    };
    (0..counts.len()).fold(0, |best, k| {
        if ratio_gt(counts[k], counts[best]) {
            k
        } else {
            best
        }
    })
}

/// Cluster whose labeled members are most often non-iD.
pub fn exclude_nonid_cluster(
    model: &ClusterModel,
    labeled: impl IntoIterator<Item = LabeledExample>,
    classes: usize,
) -> Result<usize> {
    let mut counts = vec![(0usize, 0usize); model.k()];
    let mut any = false;
    for ex in labeled {
        any = true;
        if let Some(c) = model.cluster_of(ex.sample_id) {
            counts[c].1 += 1;
            if ex.y > classes {
                counts[c].0 += 1;
            }
        }
    }
    if !any {
        return Err(Error::NoLabeledData);
    }
    Ok(nonid_proportion_argmax(&counts))
}

/// Largest-remainder apportionment of `batch` proportional to `sizes`,
/// never giving a cluster more than its size. Remainder ties go to the
/// lower index; capped mass is re-apportioned over clusters with room.
pub fn compute_quotas(sizes: &[usize], batch: usize) -> Result<Vec<usize>> {
    if batch == 0 {
        return Err(Error::config("batch", "must be at least 1"));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::NoEligibleClusters);
    }
    let target = batch.min(total);
    let mut quotas = vec![0usize; sizes.len()];
    loop {
        let assigned: usize = quotas.iter().sum();
        let remaining = target - assigned;
        if remaining == 0 {
            return Ok(quotas);
        }
        let open: Vec<usize> = (0..sizes.len()).filter(|&k| quotas[k] < sizes[k]).collect();
        let weight: u128 = open.iter().map(|&k| sizes[k] as u128).sum();
        let mut shares: Vec<(usize, usize, u128)> = open
            .iter()
            .map(|&k| {
                let num = remaining as u128 * sizes[k] as u128;
                (k, (num / weight) as usize, num % weight)
            })
            .collect();
        let floors: usize = shares.iter().map(|s| s.1).sum();
        let mut order: Vec<usize> = (0..shares.len()).collect();
        order.sort_by(|&a, &b| shares[b].2.cmp(&shares[a].2).then(shares[a].0.cmp(&shares[b].0)));
        for &i in order.iter().take(remaining - floors) {
            shares[i].1 += 1;
        }
        for (k, add, _) in shares {
            quotas[k] = (quotas[k] + add).min(sizes[k]);
        }
    }
}

/// Per-call working state shared by both cluster strategies.
struct ClusterState {
    classes: usize,
    ids: Vec<SampleId>,
    delta: Vec<f64>,
    /// Unlabeled candidate rows per cluster, ascending id.
    candidates: Vec<Vec<usize>>,
    radius: Vec<f64>,
    excluded: Option<usize>,
}

impl ClusterState {
    fn new(
        model: &ClusterModel,
        reprs: ArrayView2<f64>,
        pool: &PoolState,
        classes: usize,
    ) -> Result<Self> {
        let ids = model.ids().to_vec();
        if reprs.nrows() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: reprs.nrows(),
            });
        }
        let k = model.k();
        let assign = model.assignments();
        let mut delta = Vec::with_capacity(ids.len());
        for (r, h) in reprs.rows().into_iter().enumerate() {
            delta.push(crate::clustering::centroid_distance(model, assign[r], h)?);
        }
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&r| ids[r]);
        let mut candidates = vec![Vec::new(); k];
        let mut radius = vec![f64::INFINITY; k];
        for r in order {
            let id = ids[r];
            if pool.is_unlabeled(id) {
                candidates[assign[r]].push(r);
            } else if pool.label_of(id).is_some_and(|y| y > classes) {
                let c = assign[r];
                radius[c] = radius[c].min(delta[r]);
            }
        }
        let excluded = if pool.labeled_len() > 0 {
            Some(exclude_nonid_cluster(model, pool.labeled(), classes)?)
        } else {
            None
        };
        Ok(Self {
            classes,
            ids,
            delta,
            candidates,
            radius,
            excluded,
        })
    }

    fn eligible(&self) -> Vec<usize> {
        (0..self.candidates.len())
            .filter(|&c| Some(c) != self.excluded && !self.candidates[c].is_empty())
            .collect()
    }
}

/// Picks the next Distance(CL) candidate position within `cands`.
fn distance_pick(cands: &[usize], delta: &[f64], ids: &[SampleId], radius: f64) -> usize {
    let better_inside = |a: usize, b: usize| match delta[a].total_cmp(&delta[b]) {
        Ordering::Equal => ids[a] < ids[b],
        o => o == Ordering::Greater,
    };
    let better_outside = |a: usize, b: usize| match delta[a].total_cmp(&delta[b]) {
        Ordering::Equal => ids[a] < ids[b],
        o => o == Ordering::Less,
    };
    let mut inside: Option<usize> = None;
    let mut outside: Option<usize> = None;
    for (pos, &r) in cands.iter().enumerate() {
        if delta[r] <= radius {
            if inside.is_none_or(|p| better_inside(r, cands[p])) {
                inside = Some(pos);
            }
        } else if outside.is_none_or(|p| better_outside(r, cands[p])) {
            outside = Some(pos);
        }
    }
    inside.or(outside).expect("non-empty candidate list")
}

enum Picker {
    Distance(RadiusRefresh),
    Random(SeededRng),
}

fn run_cluster_loop(
    state: &mut ClusterState,
    request: &AcquisitionRequest,
    oracle: &mut dyn Oracle,
    mut picker: Picker,
) -> Result<AcquisitionOutcome> {
    request.validate()?;
    let classes = state.classes;
    let mut out = AcquisitionOutcome::default();
    let mut found = 0;
    let mut pass = 0;
    while found < request.n_id {
        let eligible = state.eligible();
        if eligible.is_empty() {
            out.exhausted = true;
            break;
        }
        let sizes: Vec<usize> = eligible.iter().map(|&c| state.candidates[c].len()).collect();
        let quotas = compute_quotas(&sizes, request.n_id - found)?;
        let mut next_radius = state.radius.clone();
        for (&c, &quota) in eligible.iter().zip(&quotas) {
            // Selection for the whole quota happens before annotation unless
            // radii refresh per annotation.
            let mut selected = Vec::with_capacity(quota);
            for _ in 0..quota {
                let radius = state.radius[c];
                let cands = &mut state.candidates[c];
                let pos = match &mut picker {
                    Picker::Distance(_) => distance_pick(cands, &state.delta, &state.ids, radius),
                    Picker::Random(rng) => rng.random_range(0..cands.len()),
                };
                let r = cands.remove(pos);
                out.trace.push(ClusterPick {
                    pass,
                    cluster: c,
                    sample_id: state.ids[r],
                    delta: state.delta[r],
                    radius,
                    inside: state.delta[r] <= radius,
                });
                if matches!(picker, Picker::Distance(RadiusRefresh::PerAnnotation)) {
                    let ex = oracle.annotate(state.ids[r])?;
                    if ex.y > classes {
                        state.radius[c] = state.radius[c].min(state.delta[r]);
                        next_radius[c] = state.radius[c];
                    } else {
                        found += 1;
                    }
                    out.annotated.push(ex);
                } else {
                    selected.push(r);
                }
            }
            for r in selected {
                let ex = oracle.annotate(state.ids[r])?;
                if ex.y > classes {
                    next_radius[c] = next_radius[c].min(state.delta[r]);
                } else {
                    found += 1;
                }
                out.annotated.push(ex);
            }
        }
        state.radius = next_radius;
        pass += 1;
    }
    Ok(out)
}

/// Distance-based cluster acquisition. `reprs` rows are the representations
/// of `model.ids()` in the same order.
pub fn acquire_distance_cl(
    model: &ClusterModel,
    reprs: ArrayView2<f64>,
    pool: &PoolState,
    request: &AcquisitionRequest,
    oracle: &mut dyn Oracle,
) -> Result<AcquisitionOutcome> {
    check_strategy(request, Strategy::DistanceCl)?;
    let mut state = ClusterState::new(model, reprs, pool, oracle.classes())?;
    run_cluster_loop(
        &mut state,
        request,
        oracle,
        Picker::Distance(request.radius_refresh),
    )
}

/// Seeded uniform picks within each cluster; quotas and exclusion as in
/// [`acquire_distance_cl`].
pub fn acquire_random_cl(
    model: &ClusterModel,
    reprs: ArrayView2<f64>,
    pool: &PoolState,
    request: &AcquisitionRequest,
    oracle: &mut dyn Oracle,
) -> Result<AcquisitionOutcome> {
    check_strategy(request, Strategy::RandomCl)?;
    let mut state = ClusterState::new(model, reprs, pool, oracle.classes())?;
    run_cluster_loop(
        &mut state,
        request,
        oracle,
        Picker::Random(rng::seeded(request.seed)),
    )
}

fn check_strategy(request: &AcquisitionRequest, want: Strategy) -> Result<()> {
    if request.strategy != want {
        return Err(Error::config(
            "strategy",
            format!("expected {want}, got {}", request.strategy),
        ));
    }
    Ok(())
}

/// Unlabeled ids per cluster (diagnostics and tests).
pub fn unlabeled_members(model: &ClusterModel, pool: &PoolState) -> Vec<BTreeSet<SampleId>> {
    let mut out = vec![BTreeSet::new(); model.k()];
    for (&id, &c) in model.ids().iter().zip(model.assignments()) {
        if pool.is_unlabeled(id) {
            out[c].insert(id);
        }
    }
    out
}
