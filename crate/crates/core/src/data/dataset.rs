use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Immutable in-memory dataset. Features are an `n × input_dim` matrix with
/// entries in `[0, 1]`.
///
/// Classification sets carry `labels` in `[0, num_classes)` and produce
/// one-hot targets; regression sets carry a `targets` matrix instead and have
/// `num_classes == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    features: Matrix,
    labels: Vec<usize>,
    targets: Option<Matrix>,
    num_classes: usize,
    pub split: Split,
}

impl DatasetHandle {
    pub fn classification(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(PcnError::DimensionMismatch {
                context: "dataset labels",
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(PcnError::InvalidConfig(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        check_features(&features)?;
        Ok(Self {
            features,
            labels,
            targets: None,
            num_classes,
            split: Split::Train,
        })
    }

    pub fn regression(features: Matrix, targets: Matrix) -> Result<Self> {
        if targets.rows() != features.rows() {
            return Err(PcnError::DimensionMismatch {
                context: "dataset targets",
                expected: features.rows(),
                got: targets.rows(),
            });
        }
        check_features(&features)?;
        if !targets.is_finite() {
            return Err(PcnError::NonFinite("regression targets".into()));
        }
        Ok(Self {
            features,
            labels: Vec::new(),
            targets: Some(targets),
            num_classes: 0,
            split: Split::Train,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_classification(&self) -> bool {
        self.targets.is_none()
    }

    /// Width of the target vectors.
    pub fn target_dim(&self) -> usize {
        match &self.targets {
            Some(t) => t.cols(),
            None => self.num_classes,
        }
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.get(i).copied()
    }

    /// One-hot label or regression target of sample `i`.
    pub fn target(&self, i: usize) -> Vector {
        match &self.targets {
            Some(t) => Vector::from_vec(t.row(i).to_vec()),
            None => Vector::one_hot(self.num_classes, self.labels[i]),
        }
    }

    /// Samples `start..end` as a new handle with the same split tag.
    pub fn slice(&self, start: usize, end: usize) -> DatasetHandle {
        let d = self.input_dim();
        let features = Matrix::from_vec(end - start, d, self.features.as_slice()[start * d..end * d].to_vec())
            .expect("slice bounds");
        let targets = self.targets.as_ref().map(|t| {
            let c = t.cols();
            Matrix::from_vec(end - start, c, t.as_slice()[start * c..end * c].to_vec()).expect("slice bounds")
        });
        DatasetHandle {
            features,
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                self.labels[start..end].to_vec()
            },
            targets,
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    /// Splits off the trailing `fraction` of samples (by index) as
    /// validation; the standard split is [`VALIDATION_FRACTION`].
    pub fn split_validation(&self, fraction: f64) -> (DatasetHandle, DatasetHandle) {
        let n = self.len();
        let n_val = ((n as f64) * fraction).round() as usize;
        let cut = n - n_val.min(n);
        let mut train = self.slice(0, cut);
        let mut val = self.slice(cut, n);
        train.split = Split::Train;
        val.split = Split::Val;
        (train, val)
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> DatasetHandle {
        self.slice(0, n.min(self.len()))
    }
}

/// Share of a training file held out as validation, taken from the end.
pub const VALIDATION_FRACTION: f64 = 0.1;

fn check_features(features: &Matrix) -> Result<()> {
    if let Some(bad) = features.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(PcnError::InvalidConfig(format!("feature value {bad} outside [0, 1]")));
    }
    Ok(())
}
