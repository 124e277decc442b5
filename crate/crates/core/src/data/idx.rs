//! IDX container reader (MNIST family).
//!
//! Layout: big-endian `u32` magic (`0x00000803` for rank-3 `u8` images,
//! `0x00000801` for rank-1 `u8` labels), one big-endian `u32` per dimension,
//! then the raw bytes. Files ending in `.gz` are decompressed transparently.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::data::dataset::DatasetHandle;
use crate::error::{FormatError, PcnError, Result};
use crate::numkit::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>, FormatError> {
    let mut raw = Vec::new();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut raw)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut raw)?;
    }
    Ok(raw)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn u32_be(&mut self) -> Result<u32, FormatError> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| FormatError::Truncated(format!("{} header", self.what)))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn payload(&self, len: usize) -> Result<&'a [u8], FormatError> {
        let avail = self.bytes.len() - self.pos;
        if avail < len {
            return Err(FormatError::Truncated(format!(
                "{} payload: expected {len} bytes, found {avail}",
                self.what
            )));
        }
        Ok(&self.bytes[self.pos..self.pos + len])
    }
}

/// Parses images; returns `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), FormatError> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        what: "images",
    };
    let magic = c.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(FormatError::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = c.u32_be()? as usize;
    let rows = c.u32_be()? as usize;
    let cols = c.u32_be()? as usize;
    let pixels = c.payload(n * rows * cols)?;
    Ok((n, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8], FormatError> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        what: "labels",
    };
    let magic = c.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(FormatError::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = c.u32_be()? as usize;
    c.payload(n)
}

/// Builds a dataset from in-memory IDX images and labels. Pixels are scaled
/// by 1/255; `num_classes` is one more than the largest label.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<DatasetHandle> {
    let (n, rows, cols, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != n {
        return Err(FormatError::CountMismatch {
            images: n,
            labels: labels.len(),
        }
        .into());
    }
    let features = Matrix::from_vec(n, rows * cols, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    DatasetHandle::classification(features, labels, num_classes)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let images = read_all(images_path.as_ref()).map_err(PcnError::from)?;
    let labels = read_all(labels_path.as_ref()).map_err(PcnError::from)?;
    dataset_from_idx(&images, &labels)
}

/// Serializes `u8` images in IDX layout.
pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        (
            encode_images(2, 2, &[0, 255, 51, 102, 255, 0, 0, 204]),
            encode_labels(&[3, 1]),
        )
    }

    #[test]
    fn parses_handbuilt_fixture() {
        let (img, lab) = fixture();
        let d = dataset_from_idx(&img, &lab).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input_dim(), 4);
        assert_eq!(d.input(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(d.input(1), &[1.0, 0.0, 0.0, 0.8]);
        assert_eq!(d.labels(), &[3, 1]);
        assert_eq!(d.num_classes(), 4);
    }

    #[test]
    fn labels_with_image_magic_rejected() {
        let (img, _) = fixture();
        let mut lab = encode_labels(&[3, 1]);
        lab[..4].copy_from_slice(&IMAGES_MAGIC.to_be_bytes());
        let err = dataset_from_idx(&img, &lab).unwrap_err();
        assert!(matches!(
            err,
            PcnError::Format(FormatError::BadMagic {
                expected: LABELS_MAGIC,
                found: IMAGES_MAGIC
            })
        ));
    }

    #[test]
    fn truncated_payload_rejected() {
        let (mut img, lab) = fixture();
        img.truncate(img.len() - 1);
        assert!(matches!(
            dataset_from_idx(&img, &lab).unwrap_err(),
            PcnError::Format(FormatError::Truncated(_))
        ));
        let (img, _) = fixture();
        assert!(matches!(
            dataset_from_idx(&img, &[0, 0, 8]).unwrap_err(),
            PcnError::Format(FormatError::Truncated(_))
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let (img, _) = fixture();
        let lab = encode_labels(&[1, 2, 3]);
        assert!(matches!(
            dataset_from_idx(&img, &lab).unwrap_err(),
            PcnError::Format(FormatError::CountMismatch { images: 2, labels: 3 })
        ));
    }
}
