//! IDX binary reader (the MNIST container format).
//!
//! Images carry big-endian magic `0x00000803` followed by count, rows and
//! cols as big-endian u32; labels carry magic `0x00000801` followed by the
//! count. Pixels are scaled to `[0, 1]`.

use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::nncore::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(path: &Path, bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("file truncated, needed 4 bytes at offset {offset}"),
        ));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32_be(images_path, &images, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            images_path,
            0,
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(images_path, &images, 4)? as usize;
    let rows = read_u32_be(images_path, &images, 8)? as usize;
    let cols = read_u32_be(images_path, &images, 12)? as usize;
    let expected = count * rows * cols;
    if images.len() < 16 + expected {
        return Err(Error::format(
            images_path,
            images.len() as u64,
            format!(
                "truncated pixel payload: {} of {expected} bytes present",
                images.len() - 16.min(images.len())
            ),
        ));
    }

    let label_magic = read_u32_be(labels_path, &labels, 0)?;
    if label_magic != LABEL_MAGIC {
        return Err(Error::format(
            labels_path,
            0,
            format!("bad label magic {label_magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let label_count = read_u32_be(labels_path, &labels, 4)? as usize;
    if label_count != count {
        return Err(Error::format(
            labels_path,
            4,
            format!("label count {label_count} does not match image count {count}"),
        ));
    }
    if labels.len() < 8 + count {
        return Err(Error::format(
            labels_path,
            labels.len() as u64,
            format!("truncated label payload: expected {count} bytes from offset 8"),
        ));
    }

    let data: Vec<f64> = images[16..16 + expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let label_values: Vec<usize> = labels[8..8 + count].iter().map(|&b| b as usize).collect();
    let class_count = label_values.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(
        Tensor::new(vec![count, rows, cols], data)?,
        label_values,
        Split::Train,
        class_count,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_images(dir: &Path, magic: u32, count: u32, pixels: &[u8]) -> std::path::PathBuf {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&magic.to_be_bytes());
        bytes.extend_from_slice(&count.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(pixels);
        let path = dir.join("images.idx");
        std::fs::write(&path, bytes).unwrap();
        path
    }

    fn write_labels(dir: &Path, magic: u32, count: u32, values: &[u8]) -> std::path::PathBuf {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&magic.to_be_bytes());
        bytes.extend_from_slice(&count.to_be_bytes());
        bytes.extend_from_slice(values);
        let path = dir.join("labels.idx");
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn hand_built_pair_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = [0u8, 255, 128, 64, 10, 20, 30, 40];
        let images = write_images(dir.path(), IMAGE_MAGIC, 2, &pixels);
        let labels = write_labels(dir.path(), LABEL_MAGIC, 2, &[1, 0]);
        let data = load_idx(&images, &labels).unwrap();
        assert_eq!(data.inputs().shape(), &[2, 2, 2]);
        assert_eq!(data.labels(), &[1, 0]);
        assert_eq!(data.inputs().row(0)[0], 0.0);
        assert_eq!(data.inputs().row(0)[1], 1.0);
        assert_eq!(data.inputs().row(1)[3], 40.0 / 255.0);
    }

    #[test]
    fn label_file_with_image_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), IMAGE_MAGIC, 1, &[0; 4]);
        let labels = write_labels(dir.path(), IMAGE_MAGIC, 1, &[0]);
        let err = load_idx(&images, &labels).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_image_magic_is_rejected_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), LABEL_MAGIC, 1, &[0; 4]);
        let labels = write_labels(dir.path(), LABEL_MAGIC, 1, &[0]);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), IMAGE_MAGIC, 3, &[0; 12]);
        let labels = write_labels(dir.path(), LABEL_MAGIC, 2, &[0, 1]);
        let err = load_idx(&images, &labels).unwrap_err();
        match err {
            Error::Format { offset, what, .. } => {
                assert_eq!(offset, 4);
                assert!(what.contains("does not match"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_the_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        // Declares 2 images of 2x2 but carries only 5 pixel bytes.
        let images = write_images(dir.path(), IMAGE_MAGIC, 2, &[0; 5]);
        let labels = write_labels(dir.path(), LABEL_MAGIC, 2, &[0, 1]);
        let err = load_idx(&images, &labels).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 21),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
