//! Reader for the IDX format used by MNIST.
//!
//! Images: magic `0x00000803`, then big-endian `u32` item count, row count and
//! column count, then one unsigned byte per pixel. Labels: magic `0x00000801`,
//! a `u32` item count, then one byte per label.

use std::path::Path;

use crate::data::DatasetShard;
use crate::error::{DataError, IdxError};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image block; `pixels` is row-major and scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    /// Item count declared by the header, before any limit.
    pub declared: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl IdxImages {
    pub fn items(&self) -> usize {
        let per = self.rows * self.cols;
        self.pixels.len().checked_div(per).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxLabels {
    pub declared: usize,
    pub labels: Vec<usize>,
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes an image file held in memory, keeping at most `limit` items.
pub fn parse_images(bytes: &[u8], limit: usize) -> Result<IdxImages, IdxError> {
    if limit == 0 {
        return Err(IdxError::ZeroLimit);
    }
    check_magic(bytes, IMAGES_MAGIC)?;
    let declared = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if declared == 0 {
        return Err(IdxError::NoItems);
    }
    let per_item = rows.checked_mul(cols).ok_or(IdxError::Overflow)?;
    if per_item == 0 {
        return Err(IdxError::NoItems);
    }
    let body = declared.checked_mul(per_item).ok_or(IdxError::Overflow)?;
    let expected = body.checked_add(16).ok_or(IdxError::Overflow)?;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let take = declared.min(limit);
    let pixels = bytes[16..16 + take * per_item]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    Ok(IdxImages {
        declared,
        rows,
        cols,
        pixels,
    })
}

/// Decodes a label file held in memory, keeping at most `limit` items.
pub fn parse_labels(bytes: &[u8], limit: usize) -> Result<IdxLabels, IdxError> {
    if limit == 0 {
        return Err(IdxError::ZeroLimit);
    }
    check_magic(bytes, LABELS_MAGIC)?;
    let declared = be_u32(bytes, 4)? as usize;
    if declared == 0 {
        return Err(IdxError::NoItems);
    }
    let expected = declared.checked_add(8).ok_or(IdxError::Overflow)?;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let take = declared.min(limit);
    Ok(IdxLabels {
        declared,
        labels: bytes[8..8 + take].iter().map(|&b| usize::from(b)).collect(),
    })
}

/// Pairs decoded images and labels into a shard of flattened rows.
pub fn decode_pair(images: &[u8], labels: &[u8], limit: usize) -> Result<DatasetShard, DataError> {
    let images = parse_images(images, limit)?;
    let labels = parse_labels(labels, limit)?;
    if images.declared != labels.declared {
        return Err(IdxError::CountMismatch {
            images: images.declared,
            labels: labels.declared,
        }
        .into());
    }
    DatasetShard::new(images.pixels, images.rows * images.cols, labels.labels)
}

pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: usize,
) -> Result<DatasetShard, DataError> {
    if limit == 0 {
        return Err(IdxError::ZeroLimit.into());
    }
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| IdxError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    decode_pair(&images, &labels, limit)
}

/// Encodes images and labels as IDX bytes. Test fixtures and fuzz seeds use this.
pub fn encode_pair(rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + pixels.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..n * 6).map(|i| (i * 37 % 256) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        encode_pair(2, 3, &pixels, &labels)
    }

    #[test]
    fn decodes_header_fields_and_scales_pixels() {
        let (img, lab) = fixture(5);
        let shard = decode_pair(&img, &lab, 100).unwrap();
        assert_eq!(shard.rows(), 5);
        assert_eq!(shard.dim(), 6);
        assert_eq!(shard.labels(), &[0, 1, 2, 3, 4]);
        assert_eq!(shard.row(0)[1], 37.0 / 255.0);
        assert!(shard.features().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn limit_caps_rows() {
        let (img, lab) = fixture(5);
        assert_eq!(decode_pair(&img, &lab, 2).unwrap().rows(), 2);
        assert!(matches!(
            decode_pair(&img, &lab, 0),
            Err(DataError::Idx(IdxError::ZeroLimit))
        ));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let (img, lab) = fixture(2);
        // swapped files
        assert!(matches!(
            parse_images(&lab, 10),
            Err(IdxError::BadMagic {
                expected: IMAGES_MAGIC,
                found: LABELS_MAGIC
            })
        ));
        assert!(matches!(parse_labels(&img, 10), Err(IdxError::BadMagic { .. })));
    }

    #[test]
    fn truncation_is_detected() {
        let (img, lab) = fixture(3);
        assert!(matches!(
            parse_images(&img[..img.len() - 1], 10),
            Err(IdxError::Truncated { .. })
        ));
        assert!(matches!(parse_labels(&lab[..6], 10), Err(IdxError::Truncated { .. })));
        assert!(matches!(parse_images(&[], 10), Err(IdxError::Truncated { .. })));
    }

    #[test]
    fn count_mismatch_is_detected() {
        let (img, _) = fixture(3);
        let (_, lab) = fixture(4);
        assert!(matches!(
            decode_pair(&img, &lab, 10),
            Err(DataError::Idx(IdxError::CountMismatch { images: 3, labels: 4 }))
        ));
    }

    #[test]
    fn giant_dimensions_do_not_allocate() {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        for _ in 0..3 {
            img.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert!(matches!(
            parse_images(&img, 10),
            Err(IdxError::Overflow | IdxError::Truncated { .. })
        ));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(4);
        std::fs::write(dir.path().join("img"), img).unwrap();
        std::fs::write(dir.path().join("lab"), lab).unwrap();
        let shard = load_idx(dir.path().join("img"), dir.path().join("lab"), 3).unwrap();
        assert_eq!(shard.rows(), 3);
        assert!(matches!(
            load_idx(dir.path().join("missing"), dir.path().join("lab"), 3),
            Err(DataError::Idx(IdxError::Io { .. }))
        ));
    }
}
