//! Flat sectioned key-value run configuration.
//!
//! ```text
//! [experiment]
//! strategy = "distance_cl"
//! seed = 3
//! dataset = "pool.ds"
//!
//! [finetune]
//! epochs = 40
//! ```
//!
//! Sections: `experiment`, `benchmark`, `representation`, `continuation`,
//! `finetune`, `baseline`, `kmeans`. Unknown sections and keys are errors.
//! Overrides use `section.key=value` and go through the same setters as
//! file values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::acquisition::RadiusRefresh;
use crate::benchgen::{assemble, BenchmarkPaths, BenchmarkSpec};
use crate::clustering::KMeansConfig;
use crate::dataset::Dataset;
use crate::driver::{ClusterBootstrap, ExperimentConfig, ExperimentData};
use crate::error::{Error, Result};
use crate::learner::TrainConfig;

pub const SECTIONS: [&str; 7] = [
    "experiment",
    "benchmark",
    "representation",
    "continuation",
    "finetune",
    "baseline",
    "kmeans",
];

/// Everything a run needs: the experiment settings and where the data
/// comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// Pool file; when absent the benchmark is generated in memory.
    pub dataset: Option<PathBuf>,
    /// Test-set file; defaults to the pool path with `.test.ds`.
    pub test_set: Option<PathBuf>,
    pub benchmark: BenchmarkSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            dataset: None,
            test_set: None,
            benchmark: BenchmarkSpec::default(),
        }
    }
}

fn parse<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

fn unknown(field: &str) -> Error {
    Error::config(field, "unknown key")
}

pub fn parse_radius_refresh(s: &str) -> Result<RadiusRefresh> {
    match s {
        "per_pass" => Ok(RadiusRefresh::PerPass),
        "per_annotation" => Ok(RadiusRefresh::PerAnnotation),
        _ => Err(Error::config(
            "experiment.radius_refresh",
            format!("`{s}` is not one of per_pass, per_annotation"),
        )),
    }
}

fn radius_refresh_str(r: RadiusRefresh) -> &'static str {
    match r {
        RadiusRefresh::PerPass => "per_pass",
        RadiusRefresh::PerAnnotation => "per_annotation",
    }
}

pub fn parse_cluster_bootstrap(s: &str) -> Result<ClusterBootstrap> {
    match s {
        "random" => Ok(ClusterBootstrap::Random),
        "strategy" => Ok(ClusterBootstrap::Strategy),
        _ => Err(Error::config(
            "experiment.cluster_bootstrap",
            format!("`{s}` is not one of random, strategy"),
        )),
    }
}

fn cluster_bootstrap_str(c: ClusterBootstrap) -> &'static str {
    match c {
        ClusterBootstrap::Random => "random",
        ClusterBootstrap::Strategy => "strategy",
    }
}

fn set_train(t: &mut TrainConfig, field: &str, key: &str, v: &str) -> Result<()> {
    match key {
        "epochs" => t.epochs = parse(field, v)?,
        "batch_size_unlabeled" => t.batch_size_unlabeled = parse(field, v)?,
        "batch_size_labeled" => t.batch_size_labeled = parse(field, v)?,
        "learning_rate" => t.learning_rate = parse(field, v)?,
        "momentum" => t.momentum = parse(field, v)?,
        "weight_decay" => t.weight_decay = parse(field, v)?,
        "seed" => t.seed = parse(field, v)?,
        "augment_noise_sigma" => t.augment_noise_sigma = parse(field, v)?,
        "augment_mask_prob" => t.augment_mask_prob = parse(field, v)?,
        "label_smoothing" => t.label_smoothing = parse(field, v)?,
        "max_grad_norm" => t.max_grad_norm = parse(field, v)?,
        "tau" => t.loss.tau = parse(field, v)?,
        _ => return Err(unknown(field)),
    }
    Ok(())
}

fn write_train(out: &mut String, name: &str, t: &TrainConfig) {
    let _ = writeln!(out, "\n[{name}]");
    let _ = writeln!(out, "epochs = {}", t.epochs);
    let _ = writeln!(out, "batch_size_unlabeled = {}", t.batch_size_unlabeled);
    let _ = writeln!(out, "batch_size_labeled = {}", t.batch_size_labeled);
    let _ = writeln!(out, "learning_rate = {:?}", t.learning_rate);
    let _ = writeln!(out, "momentum = {:?}", t.momentum);
    let _ = writeln!(out, "weight_decay = {:?}", t.weight_decay);
    let _ = writeln!(out, "seed = {}", t.seed);
    let _ = writeln!(out, "augment_noise_sigma = {:?}", t.augment_noise_sigma);
    let _ = writeln!(out, "augment_mask_prob = {:?}", t.augment_mask_prob);
    let _ = writeln!(out, "label_smoothing = {:?}", t.label_smoothing);
    let _ = writeln!(out, "max_grad_norm = {:?}", t.max_grad_norm);
    let _ = writeln!(out, "tau = {:?}", t.loss.tau);
}

fn set_kmeans(k: &mut KMeansConfig, field: &str, key: &str, v: &str) -> Result<()> {
    match key {
        "max_iter" => k.max_iter = parse(field, v)?,
        "tol" => k.tol = parse(field, v)?,
        "restarts" => k.restarts = parse(field, v)?,
        _ => return Err(unknown(field)),
    }
    Ok(())
}

fn set_benchmark(b: &mut BenchmarkSpec, field: &str, key: &str, v: &str) -> Result<()> {
    match key {
        "classes" => b.classes = parse(field, v)?,
        "dim" => b.dim = parse(field, v)?,
        "n_id" => b.n_id = parse(field, v)?,
        "n_ambiguous" => b.n_ambiguous = parse(field, v)?,
        "n_ood" => b.n_ood = parse(field, v)?,
        "n_test" => b.n_test = parse(field, v)?,
        "class_separation" => b.class_separation = parse(field, v)?,
        "ood_offset" => b.ood_offset = parse(field, v)?,
        "ood_components" => b.ood_components = parse(field, v)?,
        "committee_size" => b.committee_size = parse(field, v)?,
        "committee_epochs" => b.committee_epochs = parse(field, v)?,
        "interp_lambda" => b.interp_lambda = parse(field, v)?,
        "cross_class_only" => b.cross_class_only = parse(field, v)?,
        "min_distinct_votes" => b.min_distinct_votes = parse(field, v)?,
        "max_distinct_votes" => b.max_distinct_votes = parse(field, v)?,
        "seed" => b.seed = parse(field, v)?,
        _ => return Err(unknown(field)),
    }
    Ok(())
}

impl RunConfig {
    /// Sets one `section.key` from its textual value.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let Some((section, key)) = path.split_once('.') else {
            return Err(Error::config(path, "expected `section.key`"));
        };
        let e = &mut self.experiment;
        let v = value.trim();
        match section {
            "experiment" => match key {
                "strategy" => e.strategy = v.parse()?,
                "seed" => e.seed = parse(path, v)?,
                "initial_id" => e.initial_id = parse(path, v)?,
                "per_stage_id" => e.per_stage_id = parse(path, v)?,
                "target_id" => e.target_id = parse(path, v)?,
                "baseline_free_bootstrap" => e.baseline_free_bootstrap = parse(path, v)?,
                "radius_refresh" => e.radius_refresh = parse_radius_refresh(v)?,
                "bootstrap_step_id" => e.bootstrap_step_id = parse(path, v)?,
                "cluster_bootstrap" => e.cluster_bootstrap = parse_cluster_bootstrap(v)?,
                "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
                "test_set" => self.test_set = (!v.is_empty()).then(|| PathBuf::from(v)),
                _ => return Err(unknown(path)),
            },
            "benchmark" => set_benchmark(&mut self.benchmark, path, key, v)?,
            "representation" => set_train(&mut e.representation, path, key, v)?,
            "continuation" => set_train(&mut e.continuation, path, key, v)?,
            "finetune" => set_train(&mut e.finetune, path, key, v)?,
            "baseline" => set_train(&mut e.baseline, path, key, v)?,
            "kmeans" => set_kmeans(&mut e.kmeans, path, key, v)?,
            _ => {
                return Err(Error::config(
                    path,
                    format!("unknown section `{section}`; valid: {}", SECTIONS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let Some((path, value)) = assignment.split_once('=') else {
            return Err(Error::config(assignment, "expected `section.key=value`"));
        };
        self.set(path.trim(), value)
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge(text)?;
        Ok(cfg)
    }

    pub fn merge(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        for (section, body) in &table {
            let toml::Value::Table(body) = body else {
                return Err(Error::config(section, "top-level keys must sit inside a section"));
            };
            for (key, value) in body {
                let path = format!("{section}.{key}");
                let text = match value {
                    toml::Value::String(s) => s.clone(),
                    toml::Value::Integer(i) => i.to_string(),
                    toml::Value::Float(f) => f.to_string(),
                    toml::Value::Boolean(b) => b.to_string(),
                    _ => return Err(Error::config(&path, "expected a scalar value")),
                };
                self.set(&path, &text)?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.dataset.is_none() {
            self.benchmark.validate()?;
        }
        Ok(())
    }

    /// The fully resolved configuration, in the same format it is read from.
    pub fn render(&self) -> String {
        let e = &self.experiment;
        let mut out = String::from("[experiment]\n");
        let _ = writeln!(out, "strategy = \"{}\"", e.strategy);
        let _ = writeln!(out, "seed = {}", e.seed);
        let _ = writeln!(out, "initial_id = {}", e.initial_id);
        let _ = writeln!(out, "per_stage_id = {}", e.per_stage_id);
        let _ = writeln!(out, "target_id = {}", e.target_id);
        let _ = writeln!(out, "baseline_free_bootstrap = {}", e.baseline_free_bootstrap);
        let _ = writeln!(out, "radius_refresh = \"{}\"", radius_refresh_str(e.radius_refresh));
        let _ = writeln!(out, "bootstrap_step_id = {}", e.bootstrap_step_id);
        let _ = writeln!(
            out,
            "cluster_bootstrap = \"{}\"",
            cluster_bootstrap_str(e.cluster_bootstrap)
        );
        if let Some(p) = &self.dataset {
            let _ = writeln!(out, "dataset = {:?}", p.display().to_string());
        }
        if let Some(p) = &self.test_set {
            let _ = writeln!(out, "test_set = {:?}", p.display().to_string());
        }
        let b = &self.benchmark;
        out.push_str("\n[benchmark]\n");
        let _ = writeln!(out, "classes = {}", b.classes);
        let _ = writeln!(out, "dim = {}", b.dim);
        let _ = writeln!(out, "n_id = {}", b.n_id);
        let _ = writeln!(out, "n_ambiguous = {}", b.n_ambiguous);
        let _ = writeln!(out, "n_ood = {}", b.n_ood);
        let _ = writeln!(out, "n_test = {}", b.n_test);
        let _ = writeln!(out, "class_separation = {:?}", b.class_separation);
        let _ = writeln!(out, "ood_offset = {:?}", b.ood_offset);
        let _ = writeln!(out, "ood_components = {}", b.ood_components);
        let _ = writeln!(out, "committee_size = {}", b.committee_size);
        let _ = writeln!(out, "committee_epochs = {}", b.committee_epochs);
        let _ = writeln!(out, "interp_lambda = {:?}", b.interp_lambda);
        let _ = writeln!(out, "cross_class_only = {}", b.cross_class_only);
        let _ = writeln!(out, "min_distinct_votes = {}", b.min_distinct_votes);
        let _ = writeln!(out, "max_distinct_votes = {}", b.max_distinct_votes);
        let _ = writeln!(out, "seed = {}", b.seed);
        write_train(&mut out, "representation", &e.representation);
        write_train(&mut out, "continuation", &e.continuation);
        write_train(&mut out, "finetune", &e.finetune);
        write_train(&mut out, "baseline", &e.baseline);
        out.push_str("\n[kmeans]\n");
        let _ = writeln!(out, "max_iter = {}", e.kmeans.max_iter);
        let _ = writeln!(out, "tol = {:?}", e.kmeans.tol);
        let _ = writeln!(out, "restarts = {}", e.kmeans.restarts);
        out
    }

    /// Loads the pool and test files, or generates the benchmark.
    pub fn load_data(&self) -> Result<ExperimentData> {
        match &self.dataset {
            Some(pool_path) => {
                let test_path = self
                    .test_set
                    .clone()
                    .unwrap_or_else(|| BenchmarkPaths::for_output(pool_path).test);
                let pool = Dataset::read(pool_path)?;
                let test = Dataset::read(&test_path)?;
                ExperimentData::new(&pool, &test)
            }
            None => {
                let b = assemble(&self.benchmark)?;
                ExperimentData::new(&b.pool, &b.test)
            }
        }
    }
}
