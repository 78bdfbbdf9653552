//! The annotation oracle. Strategies only see the [`Oracle`] trait; the
//! simulated implementation answers from ground truth and charges every
//! query to an [`AnnotationLedger`].

use std::collections::HashSet;

use crate::dataset::{GroundTruth, SampleId, Truth};
use crate::error::{Error, Result};
use crate::ledger::AnnotationLedger;
use crate::pool::LabeledExample;

pub trait Oracle {
    /// Number of iD classes `K`; rejected samples are labeled `K + 1`.
    fn classes(&self) -> usize;

    /// Labels one sample, charging one query.
    fn annotate(&mut self, id: SampleId) -> Result<LabeledExample>;
}

/// Driver-side view of the annotator: stage bookkeeping and the free
/// bootstrap screening. Never handed to acquisition code.
pub trait AnnotationService: Oracle {
    fn ledger(&self) -> &AnnotationLedger;

    fn open_stage(&mut self);

    /// Labels and charges an iD sample; returns `None` without a charge for
    /// anything else, leaving it unlabeled.
    fn annotate_screened(&mut self, id: SampleId) -> Result<Option<LabeledExample>>;
}

#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    truth: GroundTruth,
    ledger: AnnotationLedger,
    annotated: HashSet<SampleId>,
    truth_reads: usize,
}

impl SimulatedOracle {
    pub fn new(truth: GroundTruth) -> Self {
        Self {
            truth,
            ledger: AnnotationLedger::new(),
            annotated: HashSet::new(),
            truth_reads: 0,
        }
    }

    /// Number of ground-truth lookups made so far.
    pub fn truth_reads(&self) -> usize {
        self.truth_reads
    }

    pub fn is_annotated(&self, id: SampleId) -> bool {
        self.annotated.contains(&id)
    }

    fn read(&mut self, id: SampleId) -> Result<Truth> {
        self.truth_reads += 1;
        self.truth.lookup(id).ok_or(Error::UnknownId(id))
    }

    fn label(&self, truth: Truth, id: SampleId) -> LabeledExample {
        match truth {
            Truth::InDistribution(c) => LabeledExample::new(id, c),
            _ => LabeledExample::new(id, self.truth.classes() + 1),
        }
    }
}

impl Oracle for SimulatedOracle {
    fn classes(&self) -> usize {
        self.truth.classes()
    }

    fn annotate(&mut self, id: SampleId) -> Result<LabeledExample> {
        if self.annotated.contains(&id) {
            return Err(Error::AlreadyAnnotated(id));
        }
        let truth = self.read(id)?;
        self.annotated.insert(id);
        self.ledger.record(truth.category());
        Ok(self.label(truth, id))
    }
}

impl AnnotationService for SimulatedOracle {
    fn ledger(&self) -> &AnnotationLedger {
        &self.ledger
    }

    fn open_stage(&mut self) {
        self.ledger.open_stage();
    }

    fn annotate_screened(&mut self, id: SampleId) -> Result<Option<LabeledExample>> {
        if self.annotated.contains(&id) {
            return Err(Error::AlreadyAnnotated(id));
        }
        let truth = self.read(id)?;
        if truth.is_in_distribution() {
            self.annotated.insert(id);
            self.ledger.record(truth.category());
            Ok(Some(self.label(truth, id)))
        } else {
            Ok(None)
        }
    }
}

/// Free-function form of [`Oracle::annotate`].
pub fn oracle_annotate(oracle: &mut dyn Oracle, id: SampleId) -> Result<LabeledExample> {
    oracle.annotate(id)
}
