//! Run artifacts: a versioned JSON metrics report plus plot-ready loss and
//! parity tables.

use std::collections::BTreeMap;
use std::path::Path;

use gapnet_core::ddp::{EpochMetrics, PhaseTimings};
use gapnet_core::gcnn::Evaluation;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// One rank's wall-clock decomposition for one epoch, seconds per phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub rank: u32,
    pub epoch: usize,
    pub dataload: f64,
    pub forward: f64,
    pub backward: f64,
    pub optimizer: f64,
    pub gradient_aggregation: f64,
    pub total: f64,
}

impl TimingRecord {
    pub fn from_phases(rank: u32, epoch: usize, t: &PhaseTimings) -> Self {
        TimingRecord {
            rank,
            epoch,
            dataload: t.dataload,
            forward: t.forward,
            backward: t.backward,
            optimizer: t.optimizer,
            gradient_aggregation: t.gradient_aggregation,
            total: t.total,
        }
    }
}

/// Flattens a `[rank][epoch]` timing matrix in rank-major order.
pub fn timing_records(timings: &[Vec<PhaseTimings>]) -> Vec<TimingRecord> {
    timings
        .iter()
        .enumerate()
        .flat_map(|(rank, epochs)| {
            epochs
                .iter()
                .enumerate()
                .map(move |(epoch, t)| TimingRecord::from_phases(rank as u32, epoch, t))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

impl From<&EpochMetrics> for EpochRecord {
    fn from(m: &EpochMetrics) -> Self {
        EpochRecord {
            epoch: m.epoch,
            train_loss: m.train_loss,
            val_mse: m.val_mse,
            val_mae: m.val_mae,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

impl From<&Evaluation> for EvalSummary {
    fn from(e: &Evaluation) -> Self {
        EvalSummary {
            mse: e.mse,
            mae: e.mae,
            count: e.count,
        }
    }
}

/// Everything a finished training run reports, serialized as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub created_unix: u64,
    pub dataset: String,
    pub backend: String,
    pub world_size: u32,
    pub precision: String,
    pub seed: u64,
    /// Effective settings after layering flags, environment, and file.
    pub settings: BTreeMap<String, String>,
    /// Hex FNV-1a fingerprint of `settings`.
    pub settings_fingerprint: String,
    pub samples_per_epoch: u64,
    pub total_seconds: f64,
    pub epochs: Vec<EpochRecord>,
    /// One record per rank per epoch, rank-major.
    pub timings: Vec<TimingRecord>,
    pub final_train: EvalSummary,
    pub final_val: EvalSummary,
    pub final_test: EvalSummary,
}

impl MetricsReport {
    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn write_loss_csv(path: &Path, epochs: &[EpochRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_mse", "val_mae"])?;
    for e in epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_mse.to_string(),
            e.val_mae.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One `(truth, prediction)` row per sample, for parity plots.
pub fn write_parity_csv(path: &Path, eval: &Evaluation) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["true_ev", "predicted_ev"])?;
    for (t, p) in &eval.pairs {
        w.write_record([t.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
