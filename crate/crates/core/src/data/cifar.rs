//! CIFAR-10 binary batch reader.
//!
//! Each record is 3073 bytes: one label byte in `[0, 9]` followed by 3072
//! channel-major pixel bytes (3 channels of 32x32). Pixels are scaled to
//! `[0, 1]`.

use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::nncore::Tensor;

const RECORD_BYTES: usize = 3073;
const PIXELS: usize = 3 * 32 * 32;

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::usage("no CIFAR-10 batch files given"));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % RECORD_BYTES != 0 {
            let whole = bytes.len() - bytes.len() % RECORD_BYTES;
            return Err(Error::format(
                path,
                whole as u64,
                format!(
                    "file length {} is not divisible by the {RECORD_BYTES}-byte record size",
                    bytes.len()
                ),
            ));
        }
        for (r, record) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
            let label = record[0];
            if label > 9 {
                return Err(Error::format(
                    path,
                    (r * RECORD_BYTES) as u64,
                    format!("label byte {label} exceeds 9"),
                ));
            }
            labels.push(label as usize);
            data.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    if labels.is_empty() {
        return Err(Error::format(
            batch_paths[0].as_ref(),
            0,
            "empty dataset: the batch files contain no records",
        ));
    }
    let n = labels.len();
    debug_assert_eq!(data.len(), n * PIXELS);
    Dataset::new(
        Tensor::new(vec![n, 3, 32, 32], data)?,
        labels,
        Split::Train,
        10,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_batch(dir: &Path, name: &str, records: &[(u8, u8)]) -> std::path::PathBuf {
        // Each record: (label, pixel fill byte).
        let mut bytes = Vec::new();
        for &(label, fill) in records {
            bytes.push(label);
            bytes.extend(std::iter::repeat_n(fill, PIXELS));
        }
        let path = dir.join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn single_record_file_parses_to_the_right_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_batch(dir.path(), "one.bin", &[(7, 51)]);
        let data = load_cifar10(&[path]).unwrap();
        assert_eq!(data.inputs().shape(), &[1, 3, 32, 32]);
        assert_eq!(data.labels(), &[7]);
        assert_eq!(data.inputs().data()[0], 51.0 / 255.0);
    }

    #[test]
    fn empty_file_is_an_empty_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        std::fs::write(&path, b"").unwrap();
        let err = load_cifar10(&[path]).unwrap_err();
        match err {
            Error::Format { what, .. } => assert!(what.contains("empty dataset")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn partial_record_is_a_divisibility_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.bin");
        std::fs::write(&path, vec![0u8; 3072]).unwrap();
        let err = load_cifar10(&[path]).unwrap_err();
        match err {
            Error::Format { offset, what, .. } => {
                assert_eq!(offset, 0);
                assert!(what.contains("not divisible"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_names_its_record_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_batch(dir.path(), "bad.bin", &[(3, 0), (10, 0)]);
        let err = load_cifar10(&[path]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, RECORD_BYTES as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn records_concatenate_across_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_batch(dir.path(), "a.bin", &[(1, 0), (2, 0)]);
        let b = write_batch(dir.path(), "b.bin", &[(3, 0)]);
        let data = load_cifar10(&[a, b]).unwrap();
        assert_eq!(data.labels(), &[1, 2, 3]);
    }
}
