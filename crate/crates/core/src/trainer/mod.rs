//! Training regimes: from scratch, head-only and adapter transfer,
//! round-robin multi-domain training and aggregated arousal/valence
//! training.

mod aggregate;
mod data;
mod loops;
mod schedule;

pub use aggregate::{aggregate_domain, train_aggregated, AggregateTarget};
pub use data::{evaluate_uar, predict, training_batches, DomainData};
pub use loops::{train_multidomain, train_single, transfer_from, transfer_head_only};
pub use schedule::{effective_lr, plateau_controller, PlateauAction, PlateauController, RoundRobinSchedule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::{ModelError, Regime};
use crate::stats::StatsError;
use crate::tensor_core::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("domain {domain:?}: {partition} partition is empty")]
    EmptyPartition { domain: String, partition: &'static str },
    #[error("domain {0:?}: need at least 2 training samples")]
    TooFewSamples(String),
    #[error("multi-domain training needs at least 2 corpora, got {0}")]
    TooFewCorpora(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_stages: Vec<f64>,
    pub per_update_decay: f64,
    pub patience_epochs: usize,
    pub round_robin_steps_per_stage: usize,
    pub head_only_initial_lr: f64,
    /// Hard cap on single-task epochs; `None` lets the plateau controller
    /// decide alone.
    pub max_epochs: Option<usize>,
    /// Dev evaluation interval of multi-domain training, in rounds.
    pub multidomain_eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            momentum: 0.9,
            lr_stages: vec![0.1, 0.01, 0.001],
            per_update_decay: 1e-6,
            patience_epochs: 50,
            round_robin_steps_per_stage: 2500,
            head_only_initial_lr: 0.01,
            max_epochs: None,
            multidomain_eval_every: 250,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.lr_stages.is_empty() || self.lr_stages.iter().any(|&l| !(l > 0.0)) {
            return bad("lr_stages must be non-empty and positive");
        }
        if self.lr_stages.windows(2).any(|w| w[1] >= w[0]) {
            return bad("lr_stages must be strictly decreasing");
        }
        if self.patience_epochs == 0 {
            return bad("patience_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.per_update_decay) {
            return bad("momentum and per_update_decay must lie in [0, 1)");
        }
        if self.round_robin_steps_per_stage == 0 || self.multidomain_eval_every == 0 {
            return bad("round-robin stage length and eval interval must be positive");
        }
        if !(self.head_only_initial_lr > 0.0) {
            return bad("head_only_initial_lr must be positive");
        }
        if self.max_epochs == Some(0) {
            return bad("max_epochs must be positive");
        }
        Ok(())
    }

    /// Learning-rate stages of a regime. Head-only training starts at
    /// `head_only_initial_lr` and keeps the later, smaller stages.
    pub fn stages_for(&self, regime: Regime) -> Vec<f64> {
        if regime != Regime::HeadOnly {
            return self.lr_stages.clone();
        }
        let start = self.head_only_initial_lr;
        std::iter::once(start)
            .chain(self.lr_stages.iter().copied().filter(|&l| l < start))
            .collect()
    }
}

/// Progress notifications from the training loops.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainEvent {
    Update {
        domain: String,
        step: u64,
        stage: usize,
        lr: f64,
        loss: f64,
    },
    Epoch {
        domain: String,
        epoch: usize,
        stage: usize,
        dev_uar: f64,
    },
    StageChange {
        domain: String,
        epoch: usize,
        stage: usize,
        /// Epoch whose weights were restored; `None` for fixed schedules.
        restored_epoch: Option<usize>,
    },
    RoundEval {
        round: usize,
        domain: String,
        dev_uar: f64,
    },
}

/// Outcome of one training run, persisted as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub regime: String,
    pub corpus_ids: Vec<String>,
    pub seed: u64,
    pub dev_uar_trace: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub final_dev_uar: f64,
    pub final_test_uar: f64,
    pub updates: u64,
    /// Epoch (single-task) or round (multi-domain) at which each stage
    /// after the first began.
    pub stage_starts: Vec<usize>,
    pub checkpoint: Option<String>,
}
