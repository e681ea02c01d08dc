//! MNIST-style IDX files: a big-endian `u32` magic, one big-endian `u32` per
//! dimension, then raw unsigned bytes.

use std::path::Path;

use super::{DataError, Dataset, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let slice = bytes.get(at..at + 4).ok_or(DataError::Truncated {
        needed: at + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { found, expected });
    }
    Ok(())
}

fn body(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let needed = header + len;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(DataError::Invalid(format!(
            "{} trailing bytes after IDX payload",
            bytes.len() - needed
        )));
    }
    Ok(&bytes[header..])
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixels = body(bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(body(bytes, 8, count)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]` and each
/// image is flattened row-major into one feature row.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = parse_idx_images(&read_file(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read_file(labels_path.as_ref())?)?;
    if images.count != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let dim = images.rows * images.cols;
    let features = Tensor::matrix(
        images.count,
        dim,
        images.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .map_err(|e| DataError::Invalid(e.to_string()))?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let name = images_path
        .as_ref()
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, labels, num_classes)
}

/// Writes a dataset of `rows x cols` images back to an IDX pair. Features are
/// mapped back to bytes with `round(255 * x)`.
pub fn write_idx(
    dataset: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != dataset.dim() {
        return Err(DataError::Invalid(format!(
            "{rows}x{cols} images do not match feature dim {}",
            dataset.dim()
        )));
    }
    let pixels = dataset
        .features()
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let labels: Vec<u8> = dataset
        .labels()
        .iter()
        .map(|&l| {
            u8::try_from(l)
                .map_err(|_| DataError::Invalid(format!("label {l} does not fit a byte")))
        })
        .collect::<Result<_>>()?;
    let images = IdxImages {
        count: dataset.len(),
        rows,
        cols,
        pixels,
    };
    write_file(images_path.as_ref(), &encode_idx_images(&images))?;
    write_file(labels_path.as_ref(), &encode_idx_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_images(count: usize) -> Vec<u8> {
        encode_idx_images(&IdxImages {
            count,
            rows: 28,
            cols: 28,
            pixels: vec![0; count * 784],
        })
    }

    #[test]
    fn three_blank_images_give_zero_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
        std::fs::write(&ip, zero_images(3)).unwrap();
        std::fs::write(&lp, encode_idx_labels(&[0, 1, 2])).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.features().shape(), &[3, 784]);
        assert!(ds.features().data().iter().all(|&v| v == 0.0));
        assert_eq!(ds.num_classes(), 3);
    }

    #[test]
    fn magic_numbers_are_checked() {
        let img = zero_images(1);
        assert!(parse_idx_images(&img).is_ok());
        assert!(matches!(
            parse_idx_labels(&img),
            Err(DataError::BadMagic {
                expected: IDX_LABELS_MAGIC,
                ..
            })
        ));
        let lab = encode_idx_labels(&[1]);
        assert!(matches!(
            parse_idx_images(&lab),
            Err(DataError::BadMagic {
                expected: IDX_IMAGES_MAGIC,
                ..
            })
        ));
    }

    #[test]
    fn truncation_is_reported() {
        let mut img = zero_images(2);
        img.pop();
        assert!(matches!(
            parse_idx_images(&img),
            Err(DataError::Truncated { .. })
        ));
        assert!(matches!(
            parse_idx_labels(&[0, 0, 8]),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, zero_images(2)).unwrap();
        std::fs::write(&lp, encode_idx_labels(&[0, 1, 1])).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::CountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }
}
