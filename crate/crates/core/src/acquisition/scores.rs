//! Uncertainty scores over softmax outputs and the auxiliary-class filter.

use ndarray::ArrayView1;

use crate::error::{Error, Result};

const PROB_TOLERANCE: f64 = 1e-6;

fn check_probability(p: ArrayView1<f64>) -> Result<()> {
    if p.is_empty() {
        return Err(Error::NotAProbabilityVector("empty vector".into()));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < -PROB_TOLERANCE) {
        return Err(Error::NotAProbabilityVector(format!("component {v}")));
    }
    let sum: f64 = p.sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::NotAProbabilityVector(format!("sums to {sum}")));
    }
    Ok(())
}

/// Shannon entropy in nats, `0 <= H <= ln(len)`.
pub fn score_entropy(p: ArrayView1<f64>) -> Result<f64> {
    check_probability(p)?;
    Ok(-p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>())
}

/// `1 - max p`; larger means less confident.
pub fn score_least_confidence(p: ArrayView1<f64>) -> Result<f64> {
    check_probability(p)?;
    Ok(1.0 - p.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
}

/// Index of the largest component, lowest index on ties.
pub fn argmax(p: ArrayView1<f64>) -> usize {
    p.iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > p[best] { k } else { best })
}

/// True when the prediction's argmax is the last (auxiliary) class.
pub fn predicts_auxiliary(p: ArrayView1<f64>) -> bool {
    argmax(p) + 1 == p.len()
}
