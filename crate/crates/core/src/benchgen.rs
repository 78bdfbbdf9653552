//! Synthetic contaminated pools: Gaussian iD classes, committee-filtered
//! interpolations as ambiguous samples, and two OoD sources (displaced
//! Gaussians and box noise). Also the entry point for external embeddings.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::scores::argmax;
use crate::dataset::{Category, Dataset, Origin, Sample, Truth};
use crate::error::{Error, Result};
use crate::learner::{init_params, train_classifier, EncoderParams, TrainConfig};
use crate::rng;

const PLACEMENT_ATTEMPTS: usize = 1000;
const CANDIDATE_CHUNK: usize = 512;

const STREAM_ID: u64 = 11;
const STREAM_AMBIGUOUS: u64 = 12;
const STREAM_OOD: u64 = 13;
const STREAM_TEST: u64 = 14;
const STREAM_SHUFFLE: u64 = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    /// Number of iD classes `K`.
    pub classes: usize,
    pub dim: usize,
    pub n_id: usize,
    pub n_ambiguous: usize,
    pub n_ood: usize,
    /// Size of the separate iD test set.
    pub n_test: usize,
    /// Minimum distance between class means.
    pub class_separation: f64,
    /// Gap between the iD region and the OoD Gaussian means.
    pub ood_offset: f64,
    pub ood_components: usize,
    pub committee_size: usize,
    pub committee_epochs: usize,
    pub interp_lambda: f64,
    pub cross_class_only: bool,
    /// Candidates need at least this many distinct committee votes.
    pub min_distinct_votes: usize,
    /// Candidates with more distinct votes than this are dropped.
    pub max_distinct_votes: usize,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            dim: 16,
            n_id: 4000,
            n_ambiguous: 1000,
            n_ood: 1000,
            n_test: 2000,
            class_separation: 6.0,
            ood_offset: 6.0,
            ood_components: 4,
            committee_size: 10,
            committee_epochs: 8,
            interp_lambda: 0.7,
            cross_class_only: true,
            min_distinct_votes: 2,
            max_distinct_votes: 3,
            seed: 0,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("classes", self.classes),
            ("dim", self.dim),
            ("n_id", self.n_id),
            ("n_ambiguous", self.n_ambiguous),
            ("n_ood", self.n_ood),
            ("n_test", self.n_test),
            ("ood_components", self.ood_components),
            ("committee_size", self.committee_size),
            ("committee_epochs", self.committee_epochs),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.classes < 2 {
            return Err(Error::config("classes", "must be at least 2"));
        }
        if self.n_id < self.classes {
            return Err(Error::config("n_id", "must give every class a sample"));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::config("class_separation", "must be positive"));
        }
        if !(self.ood_offset >= 0.0 && self.ood_offset.is_finite()) {
            return Err(Error::config("ood_offset", "must be non-negative"));
        }
        if !(self.interp_lambda > 0.5 && self.interp_lambda < 1.0) {
            return Err(Error::config("interp_lambda", "must lie in (0.5, 1)"));
        }
        if self.min_distinct_votes < 1 || self.min_distinct_votes > self.max_distinct_votes {
            return Err(Error::config(
                "min_distinct_votes",
                "must satisfy 1 <= min_distinct_votes <= max_distinct_votes",
            ));
        }
        Ok(())
    }

    fn committee_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.committee_epochs,
            ..TrainConfig::default()
        }
    }
}

/// Gaussian class components and their samples. Sample ids are provisional
/// until [`assemble`] shuffles everything.
#[derive(Debug, Clone)]
pub struct IdSet {
    pub means: Array2<f64>,
    pub samples: Vec<Sample>,
}

impl IdSet {
    pub fn matrix(&self) -> Array2<f64> {
        rows_to_matrix(&self.samples, self.means.ncols())
    }

    /// 1-based class labels parallel to `samples`.
    pub fn labels(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| match s.truth() {
                Truth::InDistribution(c) => c,
                _ => unreachable!("IdSet holds iD samples only"),
            })
            .collect()
    }

    fn class_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.means.nrows()];
        for (i, y) in self.labels().into_iter().enumerate() {
            out[y - 1].push(i);
        }
        out
    }
}

fn rows_to_matrix(samples: &[Sample], dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((samples.len(), dim));
    for (mut row, s) in x.rows_mut().into_iter().zip(samples) {
        row.assign(&ndarray::aview1(&s.x));
    }
    x
}

fn normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array1<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Class means drawn one at a time from a cube sized so that typical
/// pairwise distances are about 1.5x the separation; each draw is retried
/// until it clears every earlier mean.
pub fn place_means<R: Rng + ?Sized>(spec: &BenchmarkSpec, rng: &mut R) -> Result<Array2<f64>> {
    let half = 0.75 * spec.class_separation * (6.0 / spec.dim as f64).sqrt();
    let mut means = Array2::<f64>::zeros((spec.classes, spec.dim));
    for k in 0..spec.classes {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cand: Array1<f64> = (0..spec.dim).map(|_| rng.random_range(-half..=half)).collect();
            let clear = (0..k).all(|j| {
                let d = &means.row(j) - &cand;
                d.dot(&d).sqrt() >= spec.class_separation
            });
            if clear {
                means.row_mut(k).assign(&cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::PlacementFailure {
                separation: spec.class_separation,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(means)
}

/// Even class split, remainder to the lowest classes.
pub fn class_counts(n: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|k| n / classes + usize::from(k < n % classes))
        .collect()
}

fn sample_components<R: Rng + ?Sized>(
    means: &Array2<f64>,
    n: usize,
    origin: Origin,
    rng: &mut R,
) -> Vec<Sample> {
    let dim = means.ncols();
    let mut out = Vec::with_capacity(n);
    for (k, count) in class_counts(n, means.nrows()).into_iter().enumerate() {
        for _ in 0..count {
            let x = &means.row(k) + &normal_vec(dim, rng);
            let id = out.len();
            out.push(Sample::new(id, x.to_vec(), Truth::InDistribution(k + 1), origin));
        }
    }
    out
}

/// `K` unit-covariance Gaussian classes with separated means.
pub fn gen_id<R: Rng + ?Sized>(spec: &BenchmarkSpec, rng: &mut R) -> Result<IdSet> {
    spec.validate()?;
    let means = place_means(spec, rng)?;
    let samples = sample_components(&means, spec.n_id, Origin::Generated, rng);
    Ok(IdSet { means, samples })
}

/// Independently seeded classifiers over the `K` iD classes.
#[derive(Debug, Clone)]
pub struct Committee {
    members: Vec<EncoderParams>,
}

impl Committee {
    pub fn new(members: Vec<EncoderParams>) -> Self {
        Self { members }
    }

    pub fn members(&self) -> &[EncoderParams] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member predictions (0-based class, lowest index on ties), one row per
    /// input and one column per member.
    pub fn votes(&self, x: ArrayView2<f64>) -> Result<Array2<usize>> {
        let mut out = Array2::zeros((x.nrows(), self.members.len()));
        for (m, params) in self.members.iter().enumerate() {
            let logits = params.forward_batch(x)?.logits;
            for (i, row) in logits.rows().into_iter().enumerate() {
                out[[i, m]] = argmax(row);
            }
        }
        Ok(out)
    }
}

/// Number of distinct classes among one candidate's votes.
pub fn distinct_votes(votes: &[usize]) -> usize {
    let mut v = votes.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Filter rule: neither (near-)unanimous nor spread too thin.
pub fn passes_filter(votes: &[usize], spec: &BenchmarkSpec) -> bool {
    let d = distinct_votes(votes);
    d >= spec.min_distinct_votes && d <= spec.max_distinct_votes
}

/// Trains `committee_size` classifiers on the iD set with seeds
/// `seed + 1 ..= seed + committee_size`.
pub fn committee_train(id: &IdSet, spec: &BenchmarkSpec) -> Result<Committee> {
    let x = id.matrix();
    let labels = id.labels();
    let mut members = Vec::with_capacity(spec.committee_size);
    for m in 1..=spec.committee_size as u64 {
        let seed = spec.seed.wrapping_add(m);
        let cfg = TrainConfig {
            seed,
            ..spec.committee_config()
        };
        let init = init_params(spec.dim, spec.classes, seed);
        members.push(train_classifier(init, x.view(), &labels, &cfg)?.params);
    }
    Ok(Committee { members })
}

#[derive(Debug, Clone)]
pub struct AmbiguousSet {
    pub samples: Vec<Sample>,
    /// Candidates examined, including the rejected ones.
    pub attempts: usize,
    /// Budget ran out before `n_ambiguous` were kept.
    pub exhausted: bool,
}

/// Rejection sampling of interpolations `lambda * x_a + (1 - lambda) * x_b`
/// kept only when the committee neither agrees nor scatters. Candidates are
/// generated in fixed chunks, so the attempt sequence does not depend on
/// which candidates pass.
pub fn gen_ambiguous<R: Rng + ?Sized>(
    spec: &BenchmarkSpec,
    id: &IdSet,
    committee: &Committee,
    rng: &mut R,
) -> Result<AmbiguousSet> {
    spec.validate()?;
    let members = id.class_members();
    let nonempty: Vec<usize> = (0..members.len()).filter(|&k| !members[k].is_empty()).collect();
    if nonempty.len() < 2 {
        return Err(Error::InsufficientLabels {
            distinct: nonempty.len(),
        });
    }
    let budget = 100 * spec.n_ambiguous;
    let lambda = spec.interp_lambda;
    let mut kept = Vec::with_capacity(spec.n_ambiguous);
    let mut attempts = 0;
    while kept.len() < spec.n_ambiguous && attempts < budget {
        let chunk = CANDIDATE_CHUNK.min(budget - attempts);
        let mut cand = Array2::zeros((chunk, spec.dim));
        for mut row in cand.rows_mut() {
            let a = nonempty[rng.random_range(0..nonempty.len())];
            let b = if spec.cross_class_only {
                let j = rng.random_range(0..nonempty.len() - 1);
                let pos = nonempty.iter().position(|&k| k == a).expect("a is listed");
                nonempty[if j >= pos { j + 1 } else { j }]
            } else {
                nonempty[rng.random_range(0..nonempty.len())]
            };
            let xa = &id.samples[members[a][rng.random_range(0..members[a].len())]].x;
            let xb = &id.samples[members[b][rng.random_range(0..members[b].len())]].x;
            for (j, v) in row.iter_mut().enumerate() {
                *v = lambda * xa[j] + (1.0 - lambda) * xb[j];
            }
        }
        let votes = committee.votes(cand.view())?;
        for (i, v) in votes.rows().into_iter().enumerate() {
            if kept.len() == spec.n_ambiguous {
                break;
            }
            attempts += 1;
            if passes_filter(v.as_slice().expect("row-major"), spec) {
                let id = kept.len();
                kept.push(Sample::new(id, cand.row(i).to_vec(), Truth::Ambiguous, Origin::Generated));
            }
        }
    }
    Ok(AmbiguousSet {
        exhausted: kept.len() < spec.n_ambiguous,
        samples: kept,
        attempts,
    })
}

/// Axis-aligned bounding box `(lo, hi)` of the rows of `x`.
pub fn bounding_box(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let lo = x.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
    let hi = x.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    (lo, hi)
}

/// OoD component means at `center + u * (r_max + ood_offset)` for random
/// unit directions `u`, where `r_max` is the largest distance from the
/// center of the iD means to any of them.
pub fn ood_means<R: Rng + ?Sized>(spec: &BenchmarkSpec, id_means: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    let center = id_means.mean_axis(Axis(0)).expect("at least one class");
    let r_max = id_means
        .rows()
        .into_iter()
        .map(|m| {
            let d = &m - &center;
            d.dot(&d).sqrt()
        })
        .fold(0.0, f64::max);
    let mut out = Array2::zeros((spec.ood_components, spec.dim));
    for mut row in out.rows_mut() {
        let mut u = normal_vec(spec.dim, rng);
        let norm = u.dot(&u).sqrt();
        u /= norm;
        row.assign(&(&center + &(u * (r_max + spec.ood_offset))));
    }
    out
}

/// Half the OoD samples from displaced Gaussians (the first half, rounded
/// up), half uniform over the iD bounding box scaled 1.5x about its center.
pub fn gen_ood<R: Rng + ?Sized>(spec: &BenchmarkSpec, id: &IdSet, rng: &mut R) -> Result<Vec<Sample>> {
    spec.validate()?;
    let n_gauss = spec.n_ood.div_ceil(2);
    let means = ood_means(spec, &id.means, rng);
    let mut out = sample_components(&means, n_gauss, Origin::Generated, rng);
    for s in &mut out {
        *s = Sample::new(s.id, std::mem::take(&mut s.x), Truth::OutOfDistribution, s.origin);
    }
    let (lo, hi) = bounding_box(id.matrix().view());
    let center = (&lo + &hi) / 2.0;
    let half = (&hi - &lo) * 0.75;
    for _ in n_gauss..spec.n_ood {
        let x: Vec<f64> = (0..spec.dim)
            .map(|j| {
                if half[j] > 0.0 {
                    rng.random_range(center[j] - half[j]..=center[j] + half[j])
                } else {
                    center[j]
                }
            })
            .collect();
        let id = out.len();
        out.push(Sample::new(id, x, Truth::OutOfDistribution, Origin::Generated));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub in_distribution: usize,
    pub ambiguous: usize,
    pub ood: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub counts: ManifestCounts,
    pub spec: BenchmarkSpec,
    pub ambiguous_attempts: usize,
    pub pool_sha256: String,
    pub test_sha256: String,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedSummary {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "iD {} / ambiguous {} / OoD {} (test {}), seed {}, sha256 {}",
            self.counts.in_distribution,
            self.counts.ambiguous,
            self.counts.ood,
            self.counts.test,
            self.seed,
            self.pool_sha256
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Generated pool, held-out iD test set and manifest.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub pool: Dataset,
    pub test: Dataset,
    pub manifest: Manifest,
}

/// Where [`Benchmark::write`] puts its three files for an output path such
/// as `pool.ds`: `pool.ds`, `pool.test.ds` and `pool.manifest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkPaths {
    pub pool: PathBuf,
    pub test: PathBuf,
    pub manifest: PathBuf,
}

impl BenchmarkPaths {
    pub fn for_output(out: impl AsRef<Path>) -> Self {
        let pool = out.as_ref().to_path_buf();
        Self {
            test: pool.with_extension("test.ds"),
            manifest: pool.with_extension("manifest"),
            pool,
        }
    }
}

impl Benchmark {
    pub fn write(&self, out: impl AsRef<Path>) -> Result<BenchmarkPaths> {
        let paths = BenchmarkPaths::for_output(out);
        let write = |p: &Path, text: String| fs::write(p, text).map_err(|e| Error::io(p, e));
        write(&paths.pool, self.pool.to_text())?;
        write(&paths.test, self.test.to_text())?;
        write(&paths.manifest, self.manifest.to_json())?;
        Ok(paths)
    }
}

/// Runs every generator, shuffles the pool and assigns dense ids.
pub fn assemble(spec: &BenchmarkSpec) -> Result<Benchmark> {
    spec.validate()?;
    let id = gen_id(spec, &mut rng::derive(spec.seed, STREAM_ID))?;
    let committee = committee_train(&id, spec)?;
    let amb = gen_ambiguous(spec, &id, &committee, &mut rng::derive(spec.seed, STREAM_AMBIGUOUS))?;
    if amb.exhausted {
        return Err(Error::BudgetExhausted {
            kept: amb.samples.len(),
            wanted: spec.n_ambiguous,
            attempts: amb.attempts,
        });
    }
    let ood = gen_ood(spec, &id, &mut rng::derive(spec.seed, STREAM_OOD))?;

    let mut all: Vec<Sample> = id.samples.into_iter().chain(amb.samples).chain(ood).collect();
    rng::shuffle(&mut all, &mut rng::derive(spec.seed, STREAM_SHUFFLE));
    let samples: Vec<Sample> = all
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let truth = s.truth();
            Sample::new(i, s.x, truth, s.origin)
        })
        .collect();
    let pool = Dataset::new(spec.classes, spec.dim, samples)?;

    let test_samples = sample_components(
        &id.means,
        spec.n_test,
        Origin::Generated,
        &mut rng::derive(spec.seed, STREAM_TEST),
    );
    let test = Dataset::new(spec.classes, spec.dim, test_samples)?;

    let manifest = Manifest {
        format: "alforge-manifest v1".into(),
        seed: spec.seed,
        counts: ManifestCounts {
            in_distribution: pool.count(Category::InDistribution),
            ambiguous: pool.count(Category::Ambiguous),
            ood: pool.count(Category::OutOfDistribution),
            test: test.len(),
        },
        spec: spec.clone(),
        ambiguous_attempts: amb.attempts,
        pool_sha256: sha256_hex(pool.to_text().as_bytes()),
        test_sha256: sha256_hex(test.to_text().as_bytes()),
    };
    Ok(Benchmark {
        pool,
        test,
        manifest,
    })
}

/// Loads an externally produced embedding file in the dataset format.
pub fn ingest_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::read(path)
}
