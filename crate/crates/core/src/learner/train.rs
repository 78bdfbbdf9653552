//! Training loops: contrastive representation training over both pools,
//! classifier finetuning and the supervised baseline.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::loss::{self, LossConfig};
use super::network::{Architecture, EncoderParams};
use crate::dataset::{FeatureTable, SampleId};
use crate::error::{Error, Result};
use crate::pool::PoolState;
use crate::rng::{self, SeededRng};

const STREAM_INIT: u64 = 1;
const STREAM_REPRESENTATION: u64 = 2;
const STREAM_CLASSIFIER: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size_unlabeled: usize,
    pub batch_size_labeled: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment_noise_sigma: f64,
    pub augment_mask_prob: f64,
    pub label_smoothing: f64,
    /// Gradients with a larger global L2 norm are rescaled to it; 0 disables.
    pub max_grad_norm: f64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size_unlabeled: 256,
            batch_size_labeled: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            augment_noise_sigma: 1.0,
            augment_mask_prob: 0.1,
            label_smoothing: 0.1,
            max_grad_norm: 5.0,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size_unlabeled < 2 {
            return Err(Error::config("batch_size_unlabeled", "must be at least 2"));
        }
        if self.batch_size_labeled < 1 {
            return Err(Error::config("batch_size_labeled", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if !(self.augment_noise_sigma >= 0.0 && self.augment_noise_sigma.is_finite()) {
            return Err(Error::config("augment_noise_sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.augment_mask_prob) {
            return Err(Error::config("augment_mask_prob", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config("label_smoothing", "must lie in [0, 1)"));
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return Err(Error::config("max_grad_norm", "must be non-negative"));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Mean loss per epoch.
    pub loss_history: Vec<f64>,
}

/// `x' = mask * (x + eps)` with `eps ~ N(0, sigma^2 I)` and each coordinate
/// zeroed with probability `mask_prob`.
pub fn augment<R: Rng + ?Sized>(x: ArrayView1<f64>, sigma: f64, mask_prob: f64, rng: &mut R) -> Array1<f64> {
    x.mapv(|v| {
        let noise: f64 = rng.sample(StandardNormal);
        let keep = rng.random::<f64>() >= mask_prob;
        if keep {
            v + sigma * noise
        } else {
            0.0
        }
    })
}

/// Two augmented views per row, interleaved: rows `2i`, `2i + 1`.
fn two_views(x: ArrayView2<f64>, cfg: &TrainConfig, rng: &mut SeededRng) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows() * 2, x.ncols()));
    for (i, row) in x.rows().into_iter().enumerate() {
        for v in 0..2 {
            let aug = augment(row, cfg.augment_noise_sigma, cfg.augment_mask_prob, rng);
            out.row_mut(2 * i + v).assign(&aug);
        }
    }
    out
}

pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

/// Gradient descent with momentum, L2 weight decay and norm clipping.
struct Sgd {
    velocity: EncoderParams,
    momentum: f64,
    weight_decay: f64,
    max_grad_norm: f64,
}

impl Sgd {
    fn new(params: &EncoderParams, cfg: &TrainConfig) -> Self {
        Self {
            velocity: params.zeros_like(),
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            max_grad_norm: cfg.max_grad_norm,
        }
    }

    fn step(&mut self, params: &mut EncoderParams, grad: &EncoderParams, lr: f64) {
        // Near-zero projections make the normalization gradient explode.
        let norm = grad.flatten().iter().map(|g| g * g).sum::<f64>().sqrt();
        let clip = if self.max_grad_norm > 0.0 && norm > self.max_grad_norm {
            self.max_grad_norm / norm
        } else {
            1.0
        };
        self.velocity.scale(self.momentum);
        self.velocity.add_scaled(grad, clip);
        self.velocity.add_scaled(params, self.weight_decay);
        params.add_scaled(&self.velocity, -lr);
    }
}

/// `L_con + L_supcon` for one step, with its gradient w.r.t. all weights.
///
/// `views` holds `2N` augmented rows (pairs interleaved). An empty labeled
/// batch contributes zero.
pub fn total_loss_with_grad(
    params: &EncoderParams,
    views: ArrayView2<f64>,
    labeled: ArrayView2<f64>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(f64, EncoderParams)> {
    let upass = params.forward_batch(views)?;
    let con = loss::nt_xent_with_grad(upass.z.view(), cfg)?;
    let mut grad = params.backward(&upass, Some(&con.grad), None);
    let mut total = con.loss;
    if labeled.nrows() > 0 {
        let lpass = params.forward_batch(labeled)?;
        let sup = loss::supcon_with_grad(lpass.z.view(), labels, cfg)?;
        grad.add_scaled(&params.backward(&lpass, Some(&sup.grad), None), 1.0);
        total += sup.loss;
    }
    Ok((total, grad))
}

pub fn total_loss(
    params: &EncoderParams,
    views: ArrayView2<f64>,
    labeled: ArrayView2<f64>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<f64> {
    total_loss_with_grad(params, views, labeled, labels, cfg).map(|(l, _)| l)
}

/// Freshly initialized standard network for `dim` inputs.
pub fn init_params(dim: usize, outputs: usize, seed: u64) -> EncoderParams {
    let mut rng = rng::derive(seed, STREAM_INIT);
    EncoderParams::init(Architecture::standard(dim, outputs), &mut rng)
}

fn fresh_params(features: &FeatureTable, outputs: usize, seed: u64) -> EncoderParams {
    init_params(features.dim(), outputs, seed)
}

/// Contrastive training: NT-Xent on augmented unlabeled batches plus
/// SupCon on raw labeled batches, summed per step. Starts from `init` or a
/// fresh seeded network with `K + 1` outputs.
pub fn train_representation(
    pool: &PoolState,
    features: &FeatureTable,
    cfg: &TrainConfig,
    init: Option<EncoderParams>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let unlabeled: Vec<SampleId> = pool.unlabeled().iter().copied().collect();
    if unlabeled.is_empty() {
        return Err(Error::config("unlabeled pool", "must not be empty"));
    }
    let mut params = match init {
        Some(p) => p,
        None => fresh_params(features, features.classes() + 1, cfg.seed),
    };
    params.check_input(features.dim())?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            loss_history: Vec::new(),
        });
    }

    let labeled: Vec<(SampleId, usize)> = pool.labeled().map(|e| (e.sample_id, e.y)).collect();
    let mut rng = rng::derive(cfg.seed, STREAM_REPRESENTATION);
    let bu = cfg.batch_size_unlabeled;
    let steps_per_epoch = unlabeled.len() / bu + usize::from(unlabeled.len() % bu >= 2);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut opt = Sgd::new(&params, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    let mut order = unlabeled;
    let mut lab_order = labeled;
    let mut lab_cursor = 0;
    for _ in 0..cfg.epochs {
        rng::shuffle(&mut order, &mut rng);
        rng::shuffle(&mut lab_order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(bu).filter(|c| c.len() >= 2) {
            let x = features.gather(chunk)?;
            let views = two_views(x.view(), cfg, &mut rng);
            let upass = params.forward_batch(views.view())?;
            let con = loss::nt_xent_unchecked(upass.z.view(), cfg.loss.tau);
            let mut grad = params.backward(&upass, Some(&con.grad), None);
            let mut step_loss = con.loss;

            if lab_order.len() >= 2 {
                let take = cfg.batch_size_labeled.min(lab_order.len());
                let picked: Vec<(SampleId, usize)> = (0..take)
                    .map(|i| lab_order[(lab_cursor + i) % lab_order.len()])
                    .collect();
                lab_cursor = (lab_cursor + take) % lab_order.len();
                let ids: Vec<SampleId> = picked.iter().map(|p| p.0).collect();
                let labels: Vec<usize> = picked.iter().map(|p| p.1).collect();
                let lx = features.gather(&ids)?;
                let lpass = params.forward_batch(lx.view())?;
                if let Ok(sup) = loss::supcon_unchecked(lpass.z.view(), &labels, cfg.loss.tau) {
                    grad.add_scaled(&params.backward(&lpass, Some(&sup.grad), None), 1.0);
                    step_loss += sup.loss;
                }
            }
            if !step_loss.is_finite() {
                return Err(Error::DivergedLoss { step });
            }
            opt.step(&mut params, &grad, cosine_lr(cfg.learning_rate, step, total_steps));
            step += 1;
            epoch_loss += step_loss;
            batches += 1;
        }
        history.push(epoch_loss / batches.max(1) as f64);
    }
    if !params.is_finite() {
        return Err(Error::DivergedLoss { step });
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

/// Labeled training set for the classifier: all iD examples plus the
/// auxiliary-class examples with the lowest ids, capped at the mean number
/// of iD examples per class (at least one).
pub fn classifier_training_set(pool: &PoolState, classes: usize) -> Vec<(SampleId, usize)> {
    let mut id_examples = Vec::new();
    let mut aux = Vec::new();
    for ex in pool.labeled() {
        if ex.y <= classes {
            id_examples.push((ex.sample_id, ex.y));
        } else {
            aux.push((ex.sample_id, ex.y));
        }
    }
    let cap = (id_examples.len() / classes).max(1);
    aux.truncate(cap);
    let mut set = id_examples;
    set.extend(aux);
    set.sort_unstable();
    set
}

/// Cross-entropy training of the whole network on `(x, y)` with 1-based
/// labels in `1..=outputs`.
pub fn train_classifier(
    mut params: EncoderParams,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.check_input(x.ncols())?;
    let outputs = params.architecture().outputs;
    if let Some(&bad) = labels.iter().find(|&&y| y == 0 || y > outputs) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            max: outputs,
        });
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InsufficientLabels {
            distinct: distinct.len(),
        });
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            loss_history: Vec::new(),
        });
    }

    let mut rng = rng::derive(cfg.seed, STREAM_CLASSIFIER);
    let n = labels.len();
    let bs = cfg.batch_size_labeled;
    let total_steps = n.div_ceil(bs) * cfg.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut opt = Sgd::new(&params, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        rng::shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            let bx = x.select(Axis(0), chunk);
            let pass = params.forward_batch(bx.view())?;
            let mut dlogits = Array2::zeros(pass.logits.raw_dim());
            let mut batch_loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let (l, g) =
                    loss::cross_entropy_with_grad(pass.logits.row(r), labels[i], cfg.label_smoothing)?;
                batch_loss += l;
                dlogits.row_mut(r).assign(&g);
            }
            let inv = 1.0 / chunk.len() as f64;
            dlogits *= inv;
            batch_loss *= inv;
            if !batch_loss.is_finite() {
                return Err(Error::DivergedLoss { step });
            }
            let grad = params.backward(&pass, None, Some(&dlogits));
            opt.step(&mut params, &grad, cosine_lr(cfg.learning_rate, step, total_steps));
            step += 1;
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        history.push(epoch_loss / n as f64);
    }
    if !params.is_finite() {
        return Err(Error::DivergedLoss { step });
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

fn gather_training_set(
    pool: &PoolState,
    features: &FeatureTable,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let set = classifier_training_set(pool, features.classes());
    let ids: Vec<SampleId> = set.iter().map(|p| p.0).collect();
    let labels: Vec<usize> = set.iter().map(|p| p.1).collect();
    Ok((features.gather(&ids)?, labels))
}

/// Finetunes backbone and classifier head on the (undersampled) labeled pool.
pub fn finetune_classifier(
    params: &EncoderParams,
    pool: &PoolState,
    features: &FeatureTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let (x, labels) = gather_training_set(pool, features)?;
    train_classifier(params.clone(), x.view(), &labels, cfg)
}

/// Supervised baseline: same as finetuning, from a fresh seeded network.
pub fn train_supervised_baseline(
    pool: &PoolState,
    features: &FeatureTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let (x, labels) = gather_training_set(pool, features)?;
    let init = fresh_params(features, features.classes() + 1, cfg.seed);
    train_classifier(init, x.view(), &labels, cfg)
}

/// Softmax over the classifier outputs for one input.
pub fn predict(params: &EncoderParams, x: &[f64]) -> Result<Array1<f64>> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    Ok(predict_batch(params, view)?.row(0).to_owned())
}

pub fn predict_batch(params: &EncoderParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let pass = params.forward_batch(x)?;
    let mut probs = pass.logits;
    for mut row in probs.rows_mut() {
        let s = loss::softmax(row.view());
        row.assign(&s);
    }
    Ok(probs)
}

/// Backbone representations `h` for every row of `features`.
pub fn representations(params: &EncoderParams, features: &FeatureTable) -> Result<Array2<f64>> {
    Ok(params.forward_batch(features.matrix().view())?.repr)
}
