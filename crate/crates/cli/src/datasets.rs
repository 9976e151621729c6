//! Readers for the IDX (MNIST) and CIFAR-10 binary formats.

use std::fs;
use std::path::Path;

use deeptwist_core::data::Dataset;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(bytes.len() as u64, "truncated header"))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::format(0, format!("bad magic {magic:#010x}, expected {want:#010x}")));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    if bytes.len() < header + len {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated: header promises {len} data bytes after offset {header}"),
        ));
    }
    if bytes.len() > header + len {
        return Err(Error::format((header + len) as u64, "trailing bytes after data"));
    }
    Ok(&bytes[header..])
}

/// Decoded IDX image file: `(rows, cols, pixels in [0, 1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let data = payload(bytes, 16, count * rows * cols)?;
    Ok((rows, cols, data.iter().map(|&p| f64::from(p) / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.iter().map(|&l| usize::from(l)).collect())
}

/// Builds a single-channel dataset from an IDX image file and its label
/// file. The class count is 10 unless a label demands more.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (rows, cols, pixels) = parse_idx_images(&fs::read(images)?)?;
    let labels = parse_idx_labels(&fs::read(labels)?)?;
    if pixels.len() != labels.len() * rows * cols {
        return Err(Error::Argument(format!(
            "{} images but {} labels",
            pixels.len() / (rows * cols).max(1),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    Ok(Dataset::new(1, rows.max(1), cols.max(1), classes, pixels, labels)?)
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(Error::format(
            whole as u64,
            format!("size {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::format((i * CIFAR_RECORD) as u64, format!("label {} out of range", rec[0])));
        }
        labels.push(usize::from(rec[0]));
        images.extend(rec[1..].iter().map(|&p| f64::from(p) / 255.0));
    }
    Ok(Dataset::new(3, 32, 32, 10, images, labels)?)
}

pub fn load_cifar10_binary(path: &Path) -> Result<Dataset> {
    parse_cifar10(&fs::read(path)?)
}

/// Concatenates datasets with identical image geometry.
pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts.first().ok_or_else(|| Error::Argument("no datasets to join".into()))?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut classes = 0;
    for p in parts {
        if (p.channels(), p.height(), p.width()) != (first.channels(), first.height(), first.width()) {
            return Err(Error::Argument("datasets differ in image shape".into()));
        }
        images.extend_from_slice(p.images());
        labels.extend_from_slice(p.labels());
        classes = classes.max(p.classes());
    }
    Ok(Dataset::new(first.channels(), first.height(), first.width(), classes, images, labels)?)
}
