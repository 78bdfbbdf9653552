//! The stage loop: bootstrap the labeled pool, then repeatedly refresh the
//! model, acquire, annotate, update the pools, retrain and evaluate.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{debug, info};
use ndarray::{s, Array2, ArrayView2};

use crate::acquisition::scores::argmax;
use crate::acquisition::{
    acquire_distance_cl, acquire_random_cl, acquire_uncertainty, annotate_stream, random_order,
    AcquisitionOutcome, AcquisitionRequest, RadiusRefresh, Strategy,
};
use crate::clustering::{kmeans_fit, ClusterModel, KMeansConfig};
use crate::dataset::{Dataset, FeatureTable, GroundTruth, SampleId, Truth};
use crate::error::{Error, Result};
use crate::learner::{
    finetune_classifier, predict_batch, representations, train_representation,
    train_supervised_baseline, EncoderParams, TrainConfig,
};
use crate::ledger::AnnotationLedger;
use crate::oracle::{AnnotationService, Oracle, SimulatedOracle};
use crate::pool::{LabeledExample, PoolState};
use crate::rng;

mod report;

pub use report::{
    compare_summaries, cost_per_accuracy, metrics_csv, CompareRow, ComparisonTable, RunSummary,
    StageMetrics, METRICS_HEADER,
};

const PHASE_REPRESENTATION: u64 = 20;
const PHASE_KMEANS: u64 = 21;
const PHASE_ACQUISITION: u64 = 22;
const PHASE_CLASSIFIER: u64 = 23;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub initial_id: usize,
    pub per_stage_id: usize,
    pub target_id: usize,
    /// Contrastive training before the bootstrap.
    pub representation: TrainConfig,
    /// Contrastive training continued at the start of every later stage.
    pub continuation: TrainConfig,
    /// Classifier finetuning on top of the contrastive model.
    pub finetune: TrainConfig,
    /// Supervised training of the baseline strategies.
    pub baseline: TrainConfig,
    pub kmeans: KMeansConfig,
    pub seed: u64,
    /// Baselines pay only for iD samples during the bootstrap.
    pub baseline_free_bootstrap: bool,
    pub radius_refresh: RadiusRefresh,
    /// iD count requested per acquisition call during the cluster-strategy
    /// bootstrap; 0 requests `initial_id` in one call.
    pub bootstrap_step_id: usize,
    pub cluster_bootstrap: ClusterBootstrap,
}

/// Selection rule of the cluster strategies while no label exists yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterBootstrap {
    /// Per-cluster quotas filled with seeded uniform picks.
    #[default]
    Random,
    /// The configured strategy itself (Distance(CL) then starts with
    /// infinite radii and takes the farthest samples first).
    Strategy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::DistanceCl,
            initial_id: 100,
            per_stage_id: 10,
            target_id: 300,
            representation: TrainConfig {
                epochs: 15,
                ..TrainConfig::default()
            },
            continuation: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 30,
                batch_size_labeled: 32,
                learning_rate: 0.02,
                ..TrainConfig::default()
            },
            baseline: TrainConfig {
                epochs: 30,
                batch_size_labeled: 32,
                learning_rate: 0.02,
                ..TrainConfig::default()
            },
            kmeans: KMeansConfig::default(),
            seed: 0,
            baseline_free_bootstrap: true,
            radius_refresh: RadiusRefresh::PerPass,
            bootstrap_step_id: 0,
            cluster_bootstrap: ClusterBootstrap::Random,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_id == 0 {
            return Err(Error::config("initial_id", "must be at least 1"));
        }
        if self.per_stage_id == 0 {
            return Err(Error::config("per_stage_id", "must be at least 1"));
        }
        if self.target_id < self.initial_id {
            return Err(Error::config("target_id", "must not be below initial_id"));
        }
        self.representation.validate()?;
        self.continuation.validate()?;
        self.finetune.validate()?;
        self.baseline.validate()?;
        self.kmeans.validate()
    }
}

/// Pool features (truth stripped), the ground truth for the oracle, and
/// the iD test set.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub features: FeatureTable,
    pub truth: GroundTruth,
    pub test_x: Array2<f64>,
    /// 1-based test classes.
    pub test_y: Vec<usize>,
}

impl ExperimentData {
    pub fn new(pool: &Dataset, test: &Dataset) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        if test.dim() != pool.dim() {
            return Err(Error::DimensionMismatch {
                expected: pool.dim(),
                found: test.dim(),
            });
        }
        let mut test_y = Vec::with_capacity(test.len());
        for s in test.samples() {
            match s.truth() {
                Truth::InDistribution(c) => test_y.push(c),
                _ => return Err(Error::NonIdTestSample(s.id)),
            }
        }
        let (features, truth) = pool.split();
        Ok(Self {
            features,
            truth,
            test_x: test.features().matrix().clone(),
            test_y,
        })
    }

    pub fn classes(&self) -> usize {
        self.features.classes()
    }
}

/// Mutable state of one experiment between stages.
#[derive(Debug, Clone)]
pub struct RunState {
    pub pool: PoolState,
    /// Contrastive model, for the cluster strategies.
    pub encoder: Option<EncoderParams>,
    /// Model used for evaluation and baseline scoring.
    pub classifier: EncoderParams,
    pub metrics: Vec<StageMetrics>,
    pub exhausted: bool,
    /// Index of the last completed stage.
    pub stage: usize,
}

impl RunState {
    pub fn labeled_id(&self, classes: usize) -> usize {
        self.pool.labeled_in_distribution(classes)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: Vec<StageMetrics>,
    pub exhausted: bool,
    pub ledger: AnnotationLedger,
    pub final_pool: PoolState,
}

impl ExperimentReport {
    pub fn summary(&self) -> RunSummary {
        RunSummary::from_report(self)
    }

    pub fn csv(&self) -> String {
        metrics_csv(&self.metrics)
    }
}

/// Accuracy in percent of the argmax over the first `classes` outputs;
/// the auxiliary output never wins. Ties go to the lowest class.
pub fn evaluate_accuracy(
    params: &EncoderParams,
    x: ArrayView2<f64>,
    labels: &[usize],
    classes: usize,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let logits = params.forward_batch(x)?.logits;
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.slice(s![..classes])) + 1 == y)
        .count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

fn with_seed(cfg: &TrainConfig, seed: u64, phase: u64, stage: usize) -> TrainConfig {
    TrainConfig {
        seed: rng::subseed(seed, phase, stage as u64),
        ..*cfg
    }
}

/// Representations of every pool sample and the `K + 1` clusters over them.
fn fit_clusters(
    data: &ExperimentData,
    config: &ExperimentConfig,
    encoder: &EncoderParams,
    stage: usize,
) -> Result<(Array2<f64>, ClusterModel)> {
    let reprs = representations(encoder, &data.features)?;
    let model = kmeans_fit(
        data.features.ids(),
        reprs.view(),
        data.classes() + 1,
        rng::subseed(config.seed, PHASE_KMEANS, stage as u64),
        &config.kmeans,
    )?;
    Ok((reprs, model))
}

fn cluster_acquire(
    config: &ExperimentConfig,
    strategy: Strategy,
    (reprs, model): &(Array2<f64>, ClusterModel),
    pool: &PoolState,
    n_id: usize,
    seed: u64,
    oracle: &mut dyn Oracle,
) -> Result<AcquisitionOutcome> {
    let request = AcquisitionRequest {
        radius_refresh: config.radius_refresh,
        ..AcquisitionRequest::new(strategy, n_id, seed)
    };
    match strategy {
        Strategy::DistanceCl => acquire_distance_cl(model, reprs.view(), pool, &request, oracle),
        _ => acquire_random_cl(model, reprs.view(), pool, &request, oracle),
    }
}

fn train_for_stage(
    data: &ExperimentData,
    config: &ExperimentConfig,
    encoder: Option<&EncoderParams>,
    pool: &PoolState,
    stage: usize,
) -> Result<EncoderParams> {
    let out = match encoder {
        Some(enc) => finetune_classifier(
            enc,
            pool,
            &data.features,
            &with_seed(&config.finetune, config.seed, PHASE_CLASSIFIER, stage),
        )?,
        None => train_supervised_baseline(
            pool,
            &data.features,
            &with_seed(&config.baseline, config.seed, PHASE_CLASSIFIER, stage),
        )?,
    };
    Ok(out.params)
}

fn stage_metrics(
    data: &ExperimentData,
    state: &RunState,
    ledger: &AnnotationLedger,
    stage: usize,
) -> Result<StageMetrics> {
    let counts = ledger.current();
    Ok(StageMetrics {
        stage,
        labeled_id: state.labeled_id(data.classes()),
        queried_id: counts.in_distribution,
        queried_ambiguous: counts.ambiguous,
        queried_ood: counts.ood,
        cumulative_cost: ledger.cumulative_cost(),
        test_accuracy: evaluate_accuracy(
            &state.classifier,
            data.test_x.view(),
            &data.test_y,
            data.classes(),
        )?,
    })
}

/// Labels `initial_id` iD samples with the configured strategy (seeded
/// random order for the baselines), trains the first classifier and
/// records stage 0.
pub fn bootstrap<O: AnnotationService>(
    data: &ExperimentData,
    config: &ExperimentConfig,
    oracle: &mut O,
) -> Result<RunState> {
    config.validate()?;
    let classes = data.classes();
    let pool = PoolState::new(data.features.ids().iter().copied());
    oracle.open_stage();

    let (annotated, encoder) = if config.strategy.is_contrastive() {
        let enc = train_representation(
            &pool,
            &data.features,
            &with_seed(&config.representation, config.seed, PHASE_REPRESENTATION, 0),
            None,
        )?
        .params;
        let clusters = fit_clusters(data, config, &enc, 0)?;
        let step = match config.bootstrap_step_id {
            0 => config.initial_id,
            s => s,
        };
        let mut current = pool.clone();
        let mut annotated: Vec<LabeledExample> = Vec::new();
        let mut found = 0;
        let mut call = 0u64;
        while found < config.initial_id {
            let want = step.min(config.initial_id - found);
            let seed = rng::subseed(config.seed, PHASE_ACQUISITION, call);
            let strategy = match config.cluster_bootstrap {
                ClusterBootstrap::Random if current.labeled_len() == 0 => Strategy::RandomCl,
                _ => config.strategy,
            };
            let out = cluster_acquire(config, strategy, &clusters, &current, want, seed, oracle)?;
            found += out.in_distribution(classes);
            current = current.update(&out.annotated)?;
            annotated.extend(out.annotated);
            call += 1;
            if out.exhausted {
                return Err(Error::PoolExhausted {
                    found,
                    wanted: config.initial_id,
                });
            }
        }
        (annotated, Some(enc))
    } else {
        let order = random_order(&pool, rng::subseed(config.seed, PHASE_ACQUISITION, 0));
        let mut annotated = Vec::new();
        let mut found = 0;
        for id in order {
            if found == config.initial_id {
                break;
            }
            let got = if config.baseline_free_bootstrap {
                oracle.annotate_screened(id)?
            } else {
                Some(oracle.annotate(id)?)
            };
            if let Some(ex) = got {
                found += usize::from(ex.y <= classes);
                annotated.push(ex);
            }
        }
        if found < config.initial_id {
            return Err(Error::PoolExhausted {
                found,
                wanted: config.initial_id,
            });
        }
        (annotated, None)
    };

    let pool = pool.update(&annotated)?;
    let classifier = train_for_stage(data, config, encoder.as_ref(), &pool, 0)?;
    let mut state = RunState {
        pool,
        encoder,
        classifier,
        metrics: Vec::new(),
        exhausted: false,
        stage: 0,
    };
    let m = stage_metrics(data, &state, oracle.ledger(), 0)?;
    info!("{} stage 0: {}", config.strategy, m.describe());
    state.metrics.push(m);
    Ok(state)
}

/// One acquisition round. Marks the state exhausted when candidates ran out
/// before the stage's iD quota was met; the partial stage is still trained,
/// evaluated and recorded.
pub fn run_stage<O: AnnotationService>(
    data: &ExperimentData,
    config: &ExperimentConfig,
    state: &mut RunState,
    oracle: &mut O,
) -> Result<StageMetrics> {
    let classes = data.classes();
    let have = state.labeled_id(classes);
    if have >= config.target_id {
        return Err(Error::config("target_id", "already reached"));
    }
    if state.exhausted {
        return Err(Error::PoolExhausted {
            found: have,
            wanted: config.target_id,
        });
    }
    let stage = state.stage + 1;
    let want = config.per_stage_id.min(config.target_id - have);
    oracle.open_stage();

    let outcome = if config.strategy.is_contrastive() {
        let prev = state.encoder.take().expect("cluster strategies keep an encoder");
        let enc = train_representation(
            &state.pool,
            &data.features,
            &with_seed(&config.continuation, config.seed, PHASE_REPRESENTATION, stage),
            Some(prev),
        )?
        .params;
        let clusters = fit_clusters(data, config, &enc, stage)?;
        let seed = rng::subseed(config.seed, PHASE_ACQUISITION, stage as u64);
        let out = cluster_acquire(config, config.strategy, &clusters, &state.pool, want, seed, oracle)?;
        state.encoder = Some(enc);
        out
    } else {
        let ids: Vec<SampleId> = state.pool.unlabeled().iter().copied().collect();
        let probs = predict_batch(&state.classifier, data.features.gather(&ids)?.view())?;
        let request = AcquisitionRequest::new(
            config.strategy,
            want,
            rng::subseed(config.seed, PHASE_ACQUISITION, stage as u64),
        );
        match acquire_uncertainty(&state.pool, &ids, probs.view(), &request) {
            Ok(stream) => annotate_stream(&stream, oracle, want)?,
            Err(Error::PoolExhausted { .. }) => AcquisitionOutcome {
                exhausted: true,
                ..AcquisitionOutcome::default()
            },
            Err(e) => return Err(e),
        }
    };
    debug!(
        "stage {stage}: annotated {} ({} iD)",
        outcome.annotated.len(),
        outcome.in_distribution(classes)
    );

    state.pool = state.pool.update(&outcome.annotated)?;
    state.classifier = train_for_stage(data, config, state.encoder.as_ref(), &state.pool, stage)?;
    state.stage = stage;
    state.exhausted = outcome.exhausted;
    let m = stage_metrics(data, state, oracle.ledger(), stage)?;
    info!("{} stage {stage}: {}", config.strategy, m.describe());
    state.metrics.push(m.clone());
    Ok(m)
}

/// Bootstrap, then stages until `target_id` iD labels or exhaustion, using
/// the supplied annotation service.
pub fn run_experiment_with<O: AnnotationService>(
    data: &ExperimentData,
    config: &ExperimentConfig,
    oracle: &mut O,
) -> Result<ExperimentReport> {
    let mut state = bootstrap(data, config, oracle)?;
    while state.labeled_id(data.classes()) < config.target_id && !state.exhausted {
        run_stage(data, config, &mut state, oracle)?;
    }
    Ok(ExperimentReport {
        strategy: config.strategy,
        seed: config.seed,
        metrics: state.metrics,
        exhausted: state.exhausted,
        ledger: oracle.ledger().clone(),
        final_pool: state.pool,
    })
}

/// [`run_experiment_with`] against a fresh simulated oracle.
pub fn run_experiment(data: &ExperimentData, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut oracle = SimulatedOracle::new(data.truth.clone());
    run_experiment_with(data, config, &mut oracle)
}

/// Runs independent experiments on up to `jobs` threads. Results come back
/// in input order and do not depend on `jobs`.
pub fn run_sweep(
    data: &ExperimentData,
    configs: &[ExperimentConfig],
    jobs: usize,
) -> Vec<Result<ExperimentReport>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ExperimentReport>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = run_experiment(data, cfg);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}
