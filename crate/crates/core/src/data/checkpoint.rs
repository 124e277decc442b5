//! Binary model checkpoints.
//!
//! ```text
//! magic      4 bytes  "PCNC"
//! version    u32      1
//! depth      u32      L
//! per layer (l = 1..L):
//!   act_id   u8       0 identity, 1 tanh, 2 sigmoid, 3 telu
//!   rows     u32
//!   cols     u32
//!   has_bias u8       0 or 1
//!   weights  rows·cols f64, row-major
//!   bias     rows f64 (only if has_bias)
//! ```
//! All multi-byte fields are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{FormatError, PcnError, Result};
use crate::numkit::{Activation, Matrix, Vector};
use crate::pcn::model::{Layer, PcnModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PCNC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &PcnModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + model.param_count() * 8 + model.depth() * 10);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.depth() as u32).to_le_bytes());
    for layer in model.layers() {
        out.push(layer.activation.id());
        out.extend_from_slice(&(layer.weights.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weights.cols() as u32).to_le_bytes());
        out.push(u8::from(layer.bias.is_some()));
        for w in layer.weights.as_slice() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        if let Some(b) = &layer.bias {
            for v in b.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let chunk = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(chunk)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(8)?)?;
        Some(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PcnModel> {
    let mut r = Reader { bytes, pos: 0 };
    let header = |what: &str| FormatError::Truncated(format!("checkpoint {what}"));
    let magic = r.take(4).ok_or_else(|| header("magic"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic {
            expected: u32::from_be_bytes(CHECKPOINT_MAGIC),
            found: u32::from_be_bytes(magic.try_into().expect("4 bytes")),
        }
        .into());
    }
    let version = r.u32().ok_or_else(|| header("version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let depth = r.u32().ok_or_else(|| header("depth"))? as usize;
    let mut layers = Vec::with_capacity(depth.min(1024));
    for l in 1..=depth {
        let truncated = || PcnError::from(FormatError::TruncatedLayer { layer: l });
        let act_id = r.u8().ok_or_else(truncated)?;
        let activation = Activation::from_id(act_id).ok_or(FormatError::UnknownActivation(act_id))?;
        let rows = r.u32().ok_or_else(truncated)? as usize;
        let cols = r.u32().ok_or_else(truncated)? as usize;
        let has_bias = match r.u8().ok_or_else(truncated)? {
            0 => false,
            1 => true,
            other => return Err(FormatError::Inconsistent(format!("layer {l}: has_bias byte {other}")).into()),
        };
        let weights = r
            .f64s(rows.checked_mul(cols).ok_or_else(truncated)?)
            .ok_or_else(truncated)?;
        let bias = if has_bias {
            Some(Vector::from_vec(r.f64s(rows).ok_or_else(truncated)?))
        } else {
            None
        };
        layers.push(Layer {
            weights: Matrix::from_vec(rows, cols, weights)?,
            bias,
            activation,
        });
    }
    if r.pos != bytes.len() {
        return Err(FormatError::Inconsistent(format!("{} trailing bytes", bytes.len() - r.pos)).into());
    }
    PcnModel::new(layers).map_err(|e| match e {
        PcnError::DimensionMismatch { .. } | PcnError::InvalidConfig(_) => {
            FormatError::Inconsistent(e.to_string()).into()
        }
        other => other,
    })
}

pub fn save_checkpoint(model: &PcnModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| FormatError::Io(e).into())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PcnModel> {
    let bytes = fs::read(path).map_err(FormatError::Io)?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> PcnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PcnModel::glorot(
            &[3, 5, 2],
            &[Activation::TeLU, Activation::Sigmoid],
            seed.is_multiple_of(2),
            &mut rng,
        )
        .unwrap()
    }

    fn bits(m: &PcnModel) -> Vec<u64> {
        m.layers()
            .iter()
            .flat_map(|l| {
                l.weights
                    .as_slice()
                    .iter()
                    .chain(l.bias.iter().flat_map(|b| b.iter()))
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&model(0));
        assert_eq!(&bytes[..4], b"PCNC");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(bytes[12], Activation::TeLU.id());
        assert_eq!(&bytes[13..17], &[5, 0, 0, 0]);
        assert_eq!(&bytes[17..21], &[3, 0, 0, 0]);
        assert_eq!(bytes[21], 1);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let mut bytes = encode_checkpoint(&model(1));
        bytes[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(PcnError::Format(FormatError::BadMagic { .. }))
        ));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = encode_checkpoint(&model(1));
        bytes[4] = 2;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(PcnError::Format(FormatError::UnsupportedVersion(2)))
        ));
    }

    #[test]
    fn truncation_names_the_layer() {
        let m = model(2);
        let bytes = encode_checkpoint(&m);
        // cut inside the second layer's weights
        let second_layer_start = 12 + 10 + (5 * 3 + 5) * 8;
        let cut = &bytes[..second_layer_start + 10 + 16];
        match decode_checkpoint(cut) {
            Err(PcnError::Format(FormatError::TruncatedLayer { layer })) => assert_eq!(layer, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let mut bytes = encode_checkpoint(&model(3));
        // second layer claims 4 columns instead of 5 (and is 1 f64 shorter)
        let second = 12 + 10 + 5 * 3 * 8;
        bytes[second + 5] = 4;
        bytes.truncate(bytes.len() - 16);
        assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pcnc");
        let m = model(4);
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(bits(&m), bits(&back));
        assert_eq!(m, back);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), depth in 1usize..4, width in 1usize..7, bias in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut dims = vec![width + 1];
            dims.extend(std::iter::repeat_n(width, depth));
            let acts: Vec<Activation> = (0..depth).map(|i| Activation::ALL[(seed as usize + i) % 4]).collect();
            let m = PcnModel::glorot(&dims, &acts, bias, &mut rng).unwrap();
            let back = decode_checkpoint(&encode_checkpoint(&m)).unwrap();
            prop_assert_eq!(bits(&m), bits(&back));
            prop_assert_eq!(m, back);
        }
    }
}
