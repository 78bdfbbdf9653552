//! Per-stage annotation cost accounting.

use serde::{Deserialize, Serialize};

use crate::dataset::Category;

/// Oracle queries made during one stage, split by true category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub in_distribution: usize,
    pub ambiguous: usize,
    pub ood: usize,
}

impl StageCounts {
    pub fn new(in_distribution: usize, ambiguous: usize, ood: usize) -> Self {
        Self {
            in_distribution,
            ambiguous,
            ood,
        }
    }

    pub fn total(&self) -> usize {
        self.in_distribution + self.ambiguous + self.ood
    }

    pub fn non_id(&self) -> usize {
        self.ambiguous + self.ood
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerTotals {
    pub cost: usize,
    pub in_distribution: usize,
    pub non_id: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationLedger {
    stages: Vec<StageCounts>,
    cumulative_cost: usize,
}

impl AnnotationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stages(stages: Vec<StageCounts>) -> Self {
        let cumulative_cost = stages.iter().map(StageCounts::total).sum();
        Self {
            stages,
            cumulative_cost,
        }
    }

    /// Starts a fresh per-stage record; later queries are charged to it.
    pub fn open_stage(&mut self) {
        self.stages.push(StageCounts::default());
    }

    /// Charges one oracle query to the current stage.
    pub fn record(&mut self, category: Category) {
        if self.stages.is_empty() {
            self.open_stage();
        }
        let cur = self.stages.last_mut().expect("stage opened above");
        match category {
            Category::InDistribution => cur.in_distribution += 1,
            Category::Ambiguous => cur.ambiguous += 1,
            Category::OutOfDistribution => cur.ood += 1,
        }
        self.cumulative_cost += 1;
    }

    pub fn stages(&self) -> &[StageCounts] {
        &self.stages
    }

    pub fn current(&self) -> StageCounts {
        self.stages.last().copied().unwrap_or_default()
    }

    pub fn cumulative_cost(&self) -> usize {
        self.cumulative_cost
    }

    pub fn totals(&self) -> LedgerTotals {
        ledger_totals(self)
    }
}

pub fn ledger_totals(ledger: &AnnotationLedger) -> LedgerTotals {
    let (id, non_id) = ledger
        .stages
        .iter()
        .fold((0, 0), |(a, b), s| (a + s.in_distribution, b + s.non_id()));
    LedgerTotals {
        cost: id + non_id,
        in_distribution: id,
        non_id,
    }
}
