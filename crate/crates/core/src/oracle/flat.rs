//! All parameters of a model as one vector.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::Vector;
use crate::pcn::model::PcnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Weights,
    Bias,
}

/// Placement of one parameter block inside `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// 1-based layer index.
    pub layer: usize,
    pub kind: SegmentKind,
    /// `(rows, cols)`; biases are `(rows, 1)`.
    pub shape: (usize, usize),
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Layer-major concatenation: `W_1` (row-major), `b_1`, `W_2`, `b_2`, ...
/// This is the same order as [`crate::pcn::ParamGrads::flatten`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub theta: Vector,
    pub layout: Vec<Segment>,
}

impl FlatParams {
    pub fn from_model(model: &PcnModel) -> Self {
        let mut theta = Vec::with_capacity(model.param_count());
        let mut layout = Vec::new();
        for (i, layer) in model.layers().iter().enumerate() {
            layout.push(Segment {
                layer: i + 1,
                kind: SegmentKind::Weights,
                shape: layer.weights.shape(),
                offset: theta.len(),
            });
            theta.extend_from_slice(layer.weights.as_slice());
            if let Some(b) = &layer.bias {
                layout.push(Segment {
                    layer: i + 1,
                    kind: SegmentKind::Bias,
                    shape: (b.len(), 1),
                    offset: theta.len(),
                });
                theta.extend_from_slice(b);
            }
        }
        Self {
            theta: Vector::from_vec(theta),
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Writes `theta` into a model of the recorded shape.
    pub fn write_into(&self, model: &mut PcnModel) -> Result<()> {
        write_theta(model, &self.theta)
    }

    pub fn to_model(&self, template: &PcnModel) -> Result<PcnModel> {
        let mut m = template.clone();
        self.write_into(&mut m)?;
        Ok(m)
    }

    /// Index ranges of each layer's parameters (`W_l` and `b_l` together).
    pub fn layer_ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for s in &self.layout {
            if out.len() == s.layer {
                out.last_mut().expect("non-empty").end = s.range().end;
            } else {
                out.push(s.range());
            }
        }
        out
    }
}

/// Overwrites every parameter of `model` from `theta` (flattening order).
pub fn write_theta(model: &mut PcnModel, theta: &[f64]) -> Result<()> {
    let count = model.param_count();
    if theta.len() != count {
        return Err(PcnError::DimensionMismatch {
            context: "flat parameter vector",
            expected: count,
            got: theta.len(),
        });
    }
    let mut pos = 0;
    for slice in model.param_slices_mut() {
        let n = slice.len();
        slice.copy_from_slice(&theta[pos..pos + n]);
        pos += n;
    }
    Ok(())
}
