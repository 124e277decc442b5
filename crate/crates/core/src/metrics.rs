//! Metrics stream shared by every trainer and diagnostic.
//!
//! One JSON object per line with a fixed field list; fields that do not apply
//! to a record are `null`, never omitted.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Activity updates within one inference run.
    Inference,
    /// One optimizer step.
    Learning,
    /// End-of-epoch evaluation.
    Epoch,
    /// Diagnostic record written when a run aborts.
    Diverged,
}

/// Field names in serialization order.
pub const RECORD_FIELDS: [&str; 12] = [
    "run_id",
    "step",
    "epoch",
    "phase",
    "F",
    "L_out",
    "E_resid",
    "grad_norm",
    "train_acc",
    "val_acc",
    "rel_error",
    "angle",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub run_id: String,
    pub step: u64,
    pub epoch: u64,
    pub phase: Phase,
    #[serde(rename = "F")]
    pub free_energy: Option<f64>,
    #[serde(rename = "L_out")]
    pub output_loss: Option<f64>,
    #[serde(rename = "E_resid")]
    pub residual: Option<f64>,
    pub grad_norm: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    /// Per-layer `‖dθ − dθ_BP‖ / ‖dθ_BP‖`.
    pub rel_error: Option<Vec<Option<f64>>>,
    /// Per-layer angle (radians) between `dθ` and `dθ_BP`.
    pub angle: Option<Vec<Option<f64>>>,
}

impl MetricRecord {
    pub fn new(run_id: &str, step: u64, epoch: u64, phase: Phase) -> Self {
        Self {
            run_id: run_id.to_owned(),
            step,
            epoch,
            phase,
            free_energy: None,
            output_loss: None,
            residual: None,
            grad_norm: None,
            train_acc: None,
            val_acc: None,
            rel_error: None,
            angle: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<MetricRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricRecord) {
        self.records.push(r);
    }

    pub fn of_phase(&self, phase: Phase) -> impl Iterator<Item = &MetricRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    /// Free-energy series for one phase, in record order.
    pub fn energy_series(&self, phase: Phase) -> Vec<f64> {
        self.of_phase(phase).filter_map(|r| r.free_energy).collect()
    }

    /// `val_acc` per epoch record.
    pub fn val_curve(&self) -> Vec<f64> {
        self.of_phase(Phase::Epoch).filter_map(|r| r.val_acc).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn from_jsonl(text: &str) -> serde_json::Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<serde_json::Result<Vec<_>>>()?;
        Ok(Self { records })
    }
}
