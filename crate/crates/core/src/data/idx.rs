use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, WriteBytesExt};

use super::{DataError, Dataset};
use crate::nn::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>, DataError> {
    let need = 4 * (1 + dims);
    if bytes.len() >= 4 {
        let found = BigEndian::read_u32(&bytes[..4]);
        if found != magic {
            return Err(DataError::BadMagic { path: path.display().to_string(), found, expected: magic });
        }
    }
    if bytes.len() < need {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected: need as u64,
            found: bytes.len() as u64,
        });
    }
    Ok((0..dims).map(|d| BigEndian::read_u32(&bytes[4 + 4 * d..]) as usize).collect())
}

fn body<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8], DataError> {
    if bytes.len() < offset + len {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected: (offset + len) as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(&bytes[offset..offset + len])
}

/// Raw image bytes with `(count, rows, cols)`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(Vec<u8>, [usize; 3]), DataError> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let dims = header(&bytes, path, IMAGES_MAGIC, 3)?;
    let len = dims[0] * dims[1] * dims[2];
    let pixels = body(&bytes, path, 16, len)?.to_vec();
    Ok((pixels, [dims[0], dims[1], dims[2]]))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, DataError> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let dims = header(&bytes, path, LABELS_MAGIC, 1)?;
    Ok(body(&bytes, path, 8, dims[0])?.to_vec())
}

/// Loads an IDX image/label pair as a `(n, 1, rows, cols)` dataset with pixels
/// scaled into `[0, 1]` and ids `0..n`. The class count is the label maximum
/// plus one, but at least 10.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let (pixels, [n, rows, cols]) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if labels.len() != n {
        return Err(DataError::CountMismatch { images: n, labels: labels.len() });
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let examples = Tensor::new(vec![n, 1, rows, cols], data)?;
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0).max(10);
    Dataset::new(examples, labels.into_iter().map(usize::from).collect(), classes)
}

/// Writes a single-channel dataset back to IDX. Pixels are mapped to bytes as
/// `round(255 * v)` clamped into `0..=255`.
pub fn write_idx(data: &Dataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<(), DataError> {
    let shape = data.example_shape();
    let (rows, cols) = match *shape {
        [1, r, c] | [r, c] => (r, c),
        _ => return Err(DataError::Invalid(format!("IDX images need (1, rows, cols), got {shape:?}"))),
    };
    if data.classes() > 256 {
        return Err(DataError::Invalid("IDX labels are single bytes".into()));
    }
    let mut img = Vec::with_capacity(16 + data.examples().len());
    img.write_u32::<BigEndian>(IMAGES_MAGIC).unwrap();
    for d in [data.len(), rows, cols] {
        img.write_u32::<BigEndian>(d as u32).unwrap();
    }
    img.extend(data.examples().data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));

    let mut lab = Vec::with_capacity(8 + data.len());
    lab.write_u32::<BigEndian>(LABELS_MAGIC).unwrap();
    lab.write_u32::<BigEndian>(data.len() as u32).unwrap();
    lab.extend(data.labels().iter().map(|&l| l as u8));

    for (path, bytes) in [(images.as_ref(), img), (labels.as_ref(), lab)] {
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}
