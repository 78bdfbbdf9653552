//! Contrastive and classification losses with analytic gradients.
//!
//! Every contrastive loss works on a matrix of unit-norm projections (one
//! per row) and uses the dot product divided by the temperature as the
//! logit between two rows. All log-sum-exp reductions subtract the maximum.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.07 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be a positive finite number"));
        }
        Ok(())
    }
}

/// Loss value together with its gradient w.r.t. the input rows.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Array2<f64>,
}

fn check_unit(z: &ArrayView2<f64>) -> Result<()> {
    for (index, row) in z.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitInput { index, norm });
        }
    }
    Ok(())
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Shared core of both contrastive losses. `positives[i]` lists the
/// positive indices of anchor `i`; anchors without positives are skipped.
/// Returns `None` when no anchor has a positive.
fn contrastive_core(z: &ArrayView2<f64>, positives: &[Vec<usize>], tau: f64) -> Option<LossGrad> {
    let m = z.nrows();
    let sims = z.dot(&z.t()) / tau;
    let anchors = positives.iter().filter(|p| !p.is_empty()).count();
    if anchors == 0 {
        return None;
    }
    let scale = 1.0 / anchors as f64;
    // Gradient w.r.t. the (already scaled) similarity matrix.
    let mut gsim = Array2::<f64>::zeros((m, m));
    let mut loss = 0.0;
    for i in 0..m {
        let pos = &positives[i];
        if pos.is_empty() {
            continue;
        }
        let row = sims.row(i);
        let others = (0..m).filter(|&k| k != i).map(|k| row[k]);
        let lse = log_sum_exp(others);
        let inv_p = 1.0 / pos.len() as f64;
        loss += pos.iter().map(|&j| lse - row[j]).sum::<f64>() * inv_p * scale;
        for k in (0..m).filter(|&k| k != i) {
            gsim[[i, k]] += (row[k] - lse).exp() * scale;
        }
        for &j in pos {
            gsim[[i, j]] -= inv_p * scale;
        }
    }
    // sims = z z^T / tau, so dL/dz = (G + G^T) z / tau.
    let sym = &gsim + &gsim.t();
    let grad = sym.dot(z) / tau;
    Some(LossGrad { loss, grad })
}

fn pair_positives(rows: usize) -> Vec<Vec<usize>> {
    (0..rows).map(|i| vec![i ^ 1]).collect()
}

/// NT-Xent over `2N` rows where rows `2i` and `2i + 1` are two views of the
/// same sample. Averaged over all `2N` anchors.
pub fn nt_xent_loss(z: ArrayView2<f64>, cfg: &LossConfig) -> Result<f64> {
    nt_xent_with_grad(z, cfg).map(|lg| lg.loss)
}

pub fn nt_xent_with_grad(z: ArrayView2<f64>, cfg: &LossConfig) -> Result<LossGrad> {
    cfg.validate()?;
    if z.nrows() < 2 || z.nrows() % 2 != 0 {
        return Err(Error::config(
            "batch",
            format!("NT-Xent needs an even number >= 2 of rows, got {}", z.nrows()),
        ));
    }
    check_unit(&z)?;
    Ok(nt_xent_unchecked(z, cfg.tau))
}

/// NT-Xent without the unit-norm check; used by gradient checks that
/// perturb the inputs off the sphere.
pub fn nt_xent_unchecked(z: ArrayView2<f64>, tau: f64) -> LossGrad {
    contrastive_core(&z, &pair_positives(z.nrows()), tau).expect("every anchor has a positive")
}

/// Supervised contrastive loss, averaging log-probabilities over each
/// anchor's positives; anchors with no positive contribute nothing.
pub fn supcon_loss(z: ArrayView2<f64>, labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    supcon_with_grad(z, labels, cfg).map(|lg| lg.loss)
}

pub fn supcon_with_grad(z: ArrayView2<f64>, labels: &[usize], cfg: &LossConfig) -> Result<LossGrad> {
    cfg.validate()?;
    if z.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            found: labels.len(),
        });
    }
    check_unit(&z)?;
    supcon_unchecked(z, labels, cfg.tau)
}

pub fn supcon_unchecked(z: ArrayView2<f64>, labels: &[usize], tau: f64) -> Result<LossGrad> {
    let positives: Vec<Vec<usize>> = labels
        .iter()
        .enumerate()
        .map(|(i, a)| {
            labels
                .iter()
                .enumerate()
                .filter(|&(j, b)| j != i && a == b)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    contrastive_core(&z, &positives, tau).ok_or(Error::NoPositivePairs)
}

/// Numerically stable softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Softmax cross-entropy with label smoothing `alpha`:
/// target = `(1 - alpha) * one_hot(y) + alpha / C`. `y` is 1-based.
pub fn cross_entropy_loss(logits: ArrayView1<f64>, y: usize, alpha: f64) -> Result<f64> {
    cross_entropy_with_grad(logits, y, alpha).map(|(l, _)| l)
}

pub fn cross_entropy_with_grad(
    logits: ArrayView1<f64>,
    y: usize,
    alpha: f64,
) -> Result<(f64, Array1<f64>)> {
    let c = logits.len();
    if y == 0 || y > c {
        return Err(Error::LabelOutOfRange { label: y, max: c });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config("label_smoothing", "must lie in [0, 1)"));
    }
    let lse = log_sum_exp(logits.iter().copied());
    let uniform = alpha / c as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(c);
    for (k, &v) in logits.iter().enumerate() {
        let target = uniform + if k + 1 == y { 1.0 - alpha } else { 0.0 };
        let log_p = v - lse;
        if target > 0.0 {
            loss -= target * log_p;
        }
        grad[k] = log_p.exp() - target;
    }
    Ok((loss, grad))
}
