//! Monotone-descent checks on energy series.

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::metrics::{MetricRecord, MetricsLog, Phase};
use crate::pcn::inference::InferenceStep;

/// Relative slack allowed per step: `V_{k+1} ≤ V_k + TOL·(1 + |V_k|)`.
pub const LYAPUNOV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub violations: usize,
    /// Largest single-step increase `V_{k+1} − V_k` (0 when the series never rises).
    pub max_increase: f64,
    pub steps_checked: usize,
}

pub fn monitor_series(values: &[f64]) -> LyapunovReport {
    let mut violations = 0;
    let mut max_increase: f64 = 0.0;
    for w in values.windows(2) {
        let rise = w[1] - w[0];
        max_increase = max_increase.max(rise);
        if !(w[1] <= w[0] + LYAPUNOV_TOL * (1.0 + w[0].abs())) {
            violations += 1;
        }
    }
    LyapunovReport {
        violations,
        max_increase,
        steps_checked: values.len().saturating_sub(1),
    }
}

/// Checks the `F` series of one phase of a single run.
pub fn lyapunov_monitor(log: &MetricsLog, phase: Phase) -> Result<LyapunovReport> {
    let series = log.energy_series(phase);
    if series.is_empty() {
        return Err(PcnError::MissingSeries(format!("no {phase:?} energy records")));
    }
    Ok(monitor_series(&series))
}

/// Inference trajectory as `inference` records.
pub fn inference_log(run_id: &str, trajectory: &[InferenceStep]) -> MetricsLog {
    let mut log = MetricsLog::default();
    for s in trajectory {
        let mut r = MetricRecord::new(run_id, s.iter as u64, 0, Phase::Inference);
        r.free_energy = Some(s.energy);
        r.grad_norm = Some(s.grad_norm);
        log.push(r);
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_series_has_no_violations() {
        let r = monitor_series(&[5.0, 4.0, 4.0, 1.0, 0.0]);
        assert_eq!(r.violations, 0);
        assert_eq!(r.max_increase, 0.0);
        assert_eq!(r.steps_checked, 4);
    }

    #[test]
    fn single_bump_is_counted() {
        let r = monitor_series(&[5.0, 4.0, 4.25, 3.0]);
        assert_eq!(r.violations, 1);
        assert_eq!(r.max_increase, 0.25);
    }

    #[test]
    fn rises_within_tolerance_pass() {
        let r = monitor_series(&[1.0, 1.0 + 1e-11]);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn nan_is_a_violation() {
        assert_eq!(monitor_series(&[1.0, f64::NAN]).violations, 1);
    }

    #[test]
    fn missing_series_errors() {
        let log = MetricsLog::default();
        assert!(matches!(
            lyapunov_monitor(&log, Phase::Learning),
            Err(PcnError::MissingSeries(_))
        ));
    }
}
