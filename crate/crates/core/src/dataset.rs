//! Samples, datasets and the line-oriented dataset text format.
//!
//! File layout: a header line `n d K`, then one line per sample
//! `id category class v_1 ... v_d`. Category codes are 0 (iD), 1 (ambiguous)
//! and 2 (OoD); class is in `1..=K` for iD rows and `-1` otherwise. Values
//! are written with 17 significant digits so that a write/read cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

pub type SampleId = usize;

/// Hidden ground-truth category of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    /// In-distribution sample of class `1..=K`.
    InDistribution(usize),
    Ambiguous,
    OutOfDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    InDistribution,
    Ambiguous,
    OutOfDistribution,
}

impl Truth {
    pub fn category(self) -> Category {
        match self {
            Truth::InDistribution(_) => Category::InDistribution,
            Truth::Ambiguous => Category::Ambiguous,
            Truth::OutOfDistribution => Category::OutOfDistribution,
        }
    }

    pub fn is_in_distribution(self) -> bool {
        matches!(self, Truth::InDistribution(_))
    }

    fn codes(self) -> (u8, i64) {
        match self {
            Truth::InDistribution(c) => (0, c as i64),
            Truth::Ambiguous => (1, -1),
            Truth::OutOfDistribution => (2, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Generated,
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub x: Vec<f64>,
    truth: Truth,
    pub origin: Origin,
}

impl Sample {
    pub fn new(id: SampleId, x: Vec<f64>, truth: Truth, origin: Origin) -> Self {
        Self {
            id,
            x,
            truth,
            origin,
        }
    }

    pub fn truth(&self) -> Truth {
        self.truth
    }
}

/// A collection of samples sharing one dimension, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    classes: usize,
    dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Builds a dataset, sorting samples by id and validating dimensions,
    /// id uniqueness and class ranges.
    pub fn new(classes: usize, dim: usize, mut samples: Vec<Sample>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::config("K", "must be at least 1"));
        }
        samples.sort_by_key(|s| s.id);
        for (pos, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.x.len(),
                });
            }
            if pos > 0 && samples[pos - 1].id == s.id {
                return Err(Error::DuplicateId { line: 0, id: s.id });
            }
            if let Truth::InDistribution(c) = s.truth {
                if c == 0 || c > classes {
                    return Err(Error::ClassOutOfRange {
                        line: 0,
                        class: c as i64,
                        category: 0,
                    });
                }
            }
        }
        Ok(Self {
            classes,
            dim,
            samples,
        })
    }

    /// Number of in-distribution classes `K`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, id: SampleId) -> Option<&Sample> {
        self.samples
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|pos| &self.samples[pos])
    }

    pub fn ids(&self) -> Vec<SampleId> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn count(&self, category: Category) -> usize {
        self.samples
            .iter()
            .filter(|s| s.truth.category() == category)
            .count()
    }

    /// Splits into the truth-free feature table handed to strategies and the
    /// ground truth reserved for the oracle and evaluator.
    pub fn split(&self) -> (FeatureTable, GroundTruth) {
        (FeatureTable::from_dataset(self), GroundTruth::from_dataset(self))
    }

    pub fn features(&self) -> FeatureTable {
        FeatureTable::from_dataset(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * (self.dim * 24 + 16));
        let _ = writeln!(out, "{} {} {}", self.samples.len(), self.dim, self.classes);
        for s in &self.samples {
            let (cat, class) = s.truth.codes();
            let _ = write!(out, "{} {} {}", s.id, cat, class);
            for v in &s.x {
                let _ = write!(out, " {v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Origin::Ingested)
    }

    /// Parses the dataset text format. Errors carry 1-based line numbers.
    pub fn parse(text: &str, origin: Origin) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines.next().ok_or_else(|| Error::MalformedHeader {
            line: 1,
            reason: "file is empty".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::MalformedHeader {
                line: hline,
                reason: format!("expected `n d K`, found {} fields", fields.len()),
            });
        }
        let parse_header = |tok: &str, name: &str| -> Result<usize> {
            tok.parse::<usize>().map_err(|_| Error::MalformedHeader {
                line: hline,
                reason: format!("{name} is not a non-negative integer: `{tok}`"),
            })
        };
        let n = parse_header(fields[0], "n")?;
        let dim = parse_header(fields[1], "d")?;
        let classes = parse_header(fields[2], "K")?;
        if classes == 0 {
            return Err(Error::MalformedHeader {
                line: hline,
                reason: "K must be at least 1".into(),
            });
        }

        let mut samples = Vec::with_capacity(n);
        for (line, row) in lines {
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() < 3 {
                return Err(Error::DimensionMismatchAt {
                    line,
                    expected: dim,
                    found: 0,
                });
            }
            let id: SampleId = toks[0].parse().map_err(|_| Error::MalformedValue {
                line,
                token: toks[0].to_string(),
            })?;
            let category: u8 = match toks[1] {
                "0" => 0,
                "1" => 1,
                "2" => 2,
                other => {
                    return Err(Error::BadCategoryCode {
                        line,
                        code: other.to_string(),
                    })
                }
            };
            let class: i64 = toks[2].parse().map_err(|_| Error::MalformedValue {
                line,
                token: toks[2].to_string(),
            })?;
            let truth = match category {
                0 if class >= 1 && class as usize <= classes => {
                    Truth::InDistribution(class as usize)
                }
                1 if class == -1 => Truth::Ambiguous,
                2 if class == -1 => Truth::OutOfDistribution,
                _ => {
                    return Err(Error::ClassOutOfRange {
                        line,
                        class,
                        category,
                    })
                }
            };
            let values = &toks[3..];
            if values.len() != dim {
                return Err(Error::DimensionMismatchAt {
                    line,
                    expected: dim,
                    found: values.len(),
                });
            }
            let x = values
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::MalformedValue {
                            line,
                            token: t.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            samples.push((line, Sample::new(id, x, truth, origin)));
        }
        if samples.len() != n {
            return Err(Error::SampleCountMismatch {
                declared: n,
                found: samples.len(),
            });
        }
        samples.sort_by_key(|(_, s)| s.id);
        for w in samples.windows(2) {
            if w[0].1.id == w[1].1.id {
                return Err(Error::DuplicateId {
                    line: w[0].0.max(w[1].0),
                    id: w[1].1.id,
                });
            }
        }
        Ok(Self {
            classes,
            dim,
            samples: samples.into_iter().map(|(_, s)| s).collect(),
        })
    }
}

/// Truth-free view of a dataset: ids (ascending) and the feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    classes: usize,
    ids: Vec<SampleId>,
    x: Array2<f64>,
}

impl FeatureTable {
    fn from_dataset(ds: &Dataset) -> Self {
        let mut x = Array2::zeros((ds.len(), ds.dim()));
        for (mut row, s) in x.rows_mut().into_iter().zip(&ds.samples) {
            row.iter_mut().zip(&s.x).for_each(|(r, v)| *r = *v);
        }
        Self {
            classes: ds.classes,
            ids: ds.ids(),
            x,
        }
    }

    /// Builds a table from ids and rows; ids must be strictly increasing.
    pub fn new(classes: usize, ids: Vec<SampleId>, x: Array2<f64>) -> Result<Self> {
        if ids.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: x.nrows(),
            });
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::DuplicateId { line: 0, id: w[1] });
        }
        Ok(Self { classes, ids, x })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row_index(&self, id: SampleId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn row(&self, id: SampleId) -> Option<ArrayView1<'_, f64>> {
        self.row_index(id).map(|r| self.x.row(r))
    }

    /// Gathers the rows for `ids` (in the given order) into a new matrix.
    pub fn gather(&self, ids: &[SampleId]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (mut dst, &id) in out.rows_mut().into_iter().zip(ids) {
            let r = self.row_index(id).ok_or(Error::UnknownId(id))?;
            dst.assign(&self.x.row(r));
        }
        Ok(out)
    }
}

/// Ground-truth lookup. Only the oracle and the evaluator hold one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    classes: usize,
    ids: Vec<SampleId>,
    truth: Vec<Truth>,
}

impl GroundTruth {
    fn from_dataset(ds: &Dataset) -> Self {
        Self {
            classes: ds.classes,
            ids: ds.ids(),
            truth: ds.samples.iter().map(|s| s.truth).collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn lookup(&self, id: SampleId) -> Option<Truth> {
        self.ids.binary_search(&id).ok().map(|p| self.truth[p])
    }
}
