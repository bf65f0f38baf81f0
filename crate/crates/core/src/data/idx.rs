//! MNIST-style IDX files (big-endian headers, `u8` payloads).

use std::fs;
use std::path::Path;

use super::domain::Domain;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxTruncated {
            path: path.to_path_buf(),
            reason: format!("header ends before byte {}", at + 4),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], offset: usize, len: Option<usize>, path: &Path) -> Result<&'a [u8]> {
    let len = len.ok_or_else(|| Error::IdxTruncated {
        path: path.to_path_buf(),
        reason: "declared size overflows".into(),
    })?;
    let body = &bytes[offset..];
    if body.len() < len {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            reason: format!("expected {len} payload bytes, found {}", body.len()),
        });
    }
    Ok(&body[..len])
}

/// Parses an image/label IDX pair already in memory.
pub fn parse_idx(images: &[u8], labels: &[u8], images_path: &Path, labels_path: &Path) -> Result<Domain> {
    check_magic(images, IMAGES_MAGIC, images_path)?;
    check_magic(labels, LABELS_MAGIC, labels_path)?;
    let n_img = read_u32(images, 4, images_path)? as usize;
    let rows = read_u32(images, 8, images_path)? as usize;
    let cols = read_u32(images, 12, images_path)? as usize;
    let n_lab = read_u32(labels, 4, labels_path)? as usize;
    if n_img != n_lab {
        return Err(Error::IdxCountMismatch {
            images: n_img,
            labels: n_lab,
        });
    }
    let d = rows.checked_mul(cols);
    let pixels = payload(images, 16, d.and_then(|d| d.checked_mul(n_img)), images_path)?;
    let label_bytes = payload(labels, 8, Some(n_lab), labels_path)?;
    let d = rows * cols;
    if n_img == 0 || d == 0 {
        return Err(Error::InsufficientData(format!(
            "{}: IDX file holds no pixels",
            images_path.display()
        )));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let mut domain = Domain::new(
        name,
        Matrix::from_vec(n_img, d, data)?,
        label_bytes.iter().map(|&l| usize::from(l)).collect(),
        None,
    )?;
    domain.image_shape = Some((rows, cols));
    Ok(domain)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Domain> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    parse_idx(&images, &labels, ip, lp)
}

/// Serializes a domain to IDX bytes; pixels are rescaled to `0..=255`.
pub fn encode_idx(domain: &Domain) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = domain.image_shape.unwrap_or((1, domain.dim()));
    if rows * cols != domain.dim() {
        return Err(Error::Shape(format!(
            "image shape {rows}x{cols} does not match dimension {}",
            domain.dim()
        )));
    }
    if let Some(&bad) = domain.labels.iter().find(|&&l| l > 255) {
        return Err(Error::InvalidConfig(format!("label {bad} does not fit in a byte")));
    }
    let n = domain.len() as u32;
    let mut images = Vec::with_capacity(16 + domain.samples.data().len());
    for v in [IMAGES_MAGIC, n, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(
        domain
            .samples
            .data()
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let mut labels = Vec::with_capacity(8 + domain.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend(domain.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(domain: &Domain, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (images, labels) = encode_idx(domain)?;
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, images).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, labels).map_err(|e| Error::io(lp, e))?;
    Ok(())
}
