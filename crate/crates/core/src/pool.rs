//! Labeled / unlabeled pool bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::SampleId;
use crate::error::{Error, Result};

/// An oracle-assigned label. `y` is in `1..=K` for iD samples and `K + 1`
/// (the auxiliary class) for anything the annotator rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub sample_id: SampleId,
    pub y: usize,
}

impl LabeledExample {
    pub fn new(sample_id: SampleId, y: usize) -> Self {
        Self { sample_id, y }
    }

    pub fn is_auxiliary(&self, classes: usize) -> bool {
        self.y == classes + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    labeled: BTreeMap<SampleId, usize>,
    unlabeled: BTreeSet<SampleId>,
    stage: usize,
}

impl PoolState {
    /// Everything unlabeled, stage 0.
    pub fn new(ids: impl IntoIterator<Item = SampleId>) -> Self {
        Self {
            labeled: BTreeMap::new(),
            unlabeled: ids.into_iter().collect(),
            stage: 0,
        }
    }

    pub fn labeled_len(&self) -> usize {
        self.labeled.len()
    }

    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn unlabeled(&self) -> &BTreeSet<SampleId> {
        &self.unlabeled
    }

    pub fn is_unlabeled(&self, id: SampleId) -> bool {
        self.unlabeled.contains(&id)
    }

    pub fn label_of(&self, id: SampleId) -> Option<usize> {
        self.labeled.get(&id).copied()
    }

    /// Labeled examples in ascending id order.
    pub fn labeled(&self) -> impl Iterator<Item = LabeledExample> + '_ {
        self.labeled
            .iter()
            .map(|(&sample_id, &y)| LabeledExample { sample_id, y })
    }

    /// Number of labeled examples with a label in `1..=classes`.
    pub fn labeled_in_distribution(&self, classes: usize) -> usize {
        self.labeled.values().filter(|&&y| y <= classes).count()
    }

    /// Moves `annotated` from the unlabeled to the labeled pool and advances
    /// the stage. The input pool is left untouched on error.
    pub fn update(&self, annotated: &[LabeledExample]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for ex in annotated {
            if !seen.insert(ex.sample_id) {
                return Err(Error::DuplicateAnnotation(ex.sample_id));
            }
            if !self.unlabeled.contains(&ex.sample_id) {
                return Err(Error::AnnotatedNotInUnlabeled(ex.sample_id));
            }
        }
        let mut next = self.clone();
        for ex in annotated {
            next.unlabeled.remove(&ex.sample_id);
            next.labeled.insert(ex.sample_id, ex.y);
        }
        next.stage += 1;
        Ok(next)
    }
}

/// Free-function form of [`PoolState::update`].
pub fn pool_update(pool: &PoolState, annotated: &[LabeledExample]) -> Result<PoolState> {
    pool.update(annotated)
}
