use std::fs;
use std::path::Path;

use super::{DataError, Dataset};
use crate::nn::Tensor;

const RECORD: usize = 1 + 3 * 32 * 32;

/// Loads CIFAR-10 binary batches (records of one label byte followed by
/// 3072 channel-major pixel bytes) into one `(n, 3, 32, 32)` dataset.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset, DataError> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        if bytes.len() % RECORD != 0 {
            return Err(DataError::Truncated {
                path: path.display().to_string(),
                expected: (bytes.len() / RECORD + 1) as u64 * RECORD as u64,
                found: bytes.len() as u64,
            });
        }
        for record in bytes.chunks_exact(RECORD) {
            let label = record[0] as usize;
            if label >= 10 {
                return Err(DataError::Label { label, classes: 10 });
            }
            labels.push(label);
            pixels.extend(record[1..].iter().map(|&p| p as f32 / 255.0));
        }
    }
    let n = labels.len();
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], pixels)?, labels, 10)
}
