//! Baseline strategies: random, least-confidence and entropy sampling over
//! aux-filtered candidates, consumed as an ordered stream.

use std::cmp::Ordering;

use ndarray::ArrayView2;

use super::scores::{predicts_auxiliary, score_entropy, score_least_confidence};
use super::{AcquisitionOutcome, AcquisitionRequest, Strategy};
use crate::dataset::{FeatureTable, SampleId};
use crate::error::{Error, Result};
use crate::learner::{predict_batch, EncoderParams};
use crate::oracle::Oracle;
use crate::pool::PoolState;
use crate::rng;

/// Drops every candidate whose argmax is the auxiliary class. `probs` row
/// `i` belongs to `ids[i]`.
pub fn aux_filter(ids: &[SampleId], probs: ArrayView2<f64>) -> Vec<SampleId> {
    ids.iter()
        .zip(probs.rows())
        .filter(|(_, p)| !predicts_auxiliary(*p))
        .map(|(&id, _)| id)
        .collect()
}

/// [`aux_filter`] after scoring `ids` with the model.
pub fn aux_filter_with_model(
    ids: &[SampleId],
    features: &FeatureTable,
    params: &EncoderParams,
) -> Result<Vec<SampleId>> {
    let x = features.gather(ids)?;
    let probs = predict_batch(params, x.view())?;
    Ok(aux_filter(ids, probs.view()))
}

/// Unlabeled ids in seeded uniform random order, no filtering.
pub fn random_order(pool: &PoolState, seed: u64) -> Vec<SampleId> {
    let mut ids: Vec<SampleId> = pool.unlabeled().iter().copied().collect();
    rng::shuffle(&mut ids, &mut rng::seeded(seed));
    ids
}

/// Ordered candidate stream for a baseline strategy. Rows of `probs` are
/// the softmax outputs for `ids`; rows for already-labeled ids are ignored.
pub fn acquire_uncertainty(
    pool: &PoolState,
    ids: &[SampleId],
    probs: ArrayView2<f64>,
    request: &AcquisitionRequest,
) -> Result<Vec<SampleId>> {
    request.validate()?;
    let mut scored: Vec<(SampleId, f64)> = Vec::new();
    for (&id, p) in ids.iter().zip(probs.rows()) {
        if !pool.is_unlabeled(id) || predicts_auxiliary(p) {
            continue;
        }
        let score = match request.strategy {
            Strategy::Random => 0.0,
            Strategy::LeastConfidence => score_least_confidence(p)?,
            Strategy::Entropy => score_entropy(p)?,
            other => {
                return Err(Error::config(
                    "strategy",
                    format!("{other} is not a stream strategy"),
                ))
            }
        };
        scored.push((id, score));
    }
    scored.sort_by_key(|s| s.0);
    let stream: Vec<SampleId> = match request.strategy {
        Strategy::Random => {
            let mut ids: Vec<SampleId> = scored.into_iter().map(|s| s.0).collect();
            rng::shuffle(&mut ids, &mut rng::seeded(request.seed));
            ids
        }
        _ => {
            scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
                Ordering::Equal => a.0.cmp(&b.0),
                o => o,
            });
            scored.into_iter().map(|s| s.0).collect()
        }
    };
    if stream.is_empty() {
        return Err(Error::PoolExhausted {
            found: 0,
            wanted: request.n_id,
        });
    }
    Ok(stream)
}

/// Annotates `stream` in order until `n_id` iD labels are collected.
pub fn annotate_stream(
    stream: &[SampleId],
    oracle: &mut dyn Oracle,
    n_id: usize,
) -> Result<AcquisitionOutcome> {
    let classes = oracle.classes();
    let mut out = AcquisitionOutcome::default();
    for &id in stream {
        if out.in_distribution(classes) >= n_id {
            return Ok(out);
        }
        out.annotated.push(oracle.annotate(id)?);
    }
    out.exhausted = out.in_distribution(classes) < n_id;
    Ok(out)
}
