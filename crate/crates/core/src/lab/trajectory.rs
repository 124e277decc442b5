//! Parameter-space trajectories and exponential decay fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: u64,
    /// Lyapunov value at this step.
    pub v: f64,
    /// Forward difference `V_{t+1} − V_t` (0 at the last point).
    pub v_dot_est: f64,
    pub dist_to_eq: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryPoint>,
}

impl TrajectoryLog {
    /// Appends a point; `t` must exceed the previous one.
    pub fn push(&mut self, t: u64, v: f64, dist_to_eq: f64, grad_norm: f64) {
        if let Some(last) = self.records.last_mut() {
            assert!(t > last.t, "trajectory steps must increase");
            last.v_dot_est = v - last.v;
        }
        self.records.push(TrajectoryPoint {
            t,
            v,
            v_dot_est: 0.0,
            dist_to_eq,
            grad_norm,
        });
    }

    pub fn distances(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist_to_eq).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t as f64).collect()
    }

    pub fn lyapunov_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.v).collect()
    }
}

/// Least-squares fit of `ln dist(t) = ln(C·dist_0) + lambda_rate·t`.
///
/// `lambda_rate` is the fitted log-distance slope: negative for decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Prefactor relative to the initial distance.
    pub c: f64,
    pub lambda_rate: f64,
    pub r_squared: f64,
    /// Number of samples in the fitted segment.
    pub points: usize,
}

impl DecayFit {
    /// Per-step contraction exponent `−lambda_rate`.
    pub fn decay_rate(&self) -> f64 {
        -self.lambda_rate
    }
}

/// Fits the samples whose distance exceeds `10 × noise_floor`. Returns `None`
/// when fewer than three samples qualify.
pub fn fit_decay(times: &[f64], dists: &[f64], noise_floor: f64) -> Option<DecayFit> {
    let cutoff = 10.0 * noise_floor;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(dists)
        .take_while(|(_, &d)| d > cutoff && d.is_finite())
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let ss_res: f64 = pts.iter().map(|&(t, y)| (y - intercept - slope * t).powi(2)).sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(DecayFit {
        c: (intercept - dists[0].ln()).exp(),
        lambda_rate: slope,
        r_squared,
        points: pts.len(),
    })
}

/// Gradient descent on `½k(w − w*)²`; returns `|w_t − w*|` for `t = 0..=steps`.
pub fn quadratic_toy(k: f64, eta: f64, w0: f64, w_star: f64, steps: usize) -> Vec<f64> {
    let mut w = w0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push((w - w_star).abs());
    for _ in 0..steps {
        w -= eta * k * (w - w_star);
        out.push((w - w_star).abs());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_toy_rate_matches_closed_form() {
        let (k, eta) = (2.0, 0.05);
        let d = quadratic_toy(k, eta, 1.5, 0.5, 200);
        let t: Vec<f64> = (0..d.len()).map(|i| i as f64).collect();
        let fit = fit_decay(&t, &d, 1e-15).unwrap();
        assert!((fit.decay_rate() + (1.0 - eta * k).ln()).abs() < 1e-6);
        assert!(fit.r_squared > 0.999_999);
        assert!((fit.c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_series_is_skipped() {
        let d = vec![0.0; 10];
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(fit_decay(&t, &d, 1e-12).is_none());
    }

    #[test]
    fn segment_stops_at_floor() {
        let d = [1.0, 0.5, 0.25, 0.125, 1e-14, 1e-14];
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let fit = fit_decay(&t, &d, 1e-13).unwrap();
        assert_eq!(fit.points, 4);
        assert!((fit.lambda_rate - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn trajectory_rates() {
        let mut log = TrajectoryLog::default();
        log.push(0, 3.0, 1.0, 0.1);
        log.push(1, 2.0, 0.5, 0.1);
        assert_eq!(log.records[0].v_dot_est, -1.0);
    }
}
