//! `EMBVIEW1` embedding files.
//!
//! ```text
//! offset  size      field
//! 0       8         magic "EMBVIEW1"
//! 8       4         u32 version (= 1)
//! 12      4         u32 n, number of instances
//! 16      4         u32 d, embedding width (> 0)
//! 20      4         u32 K, class count (0 = unlabeled)
//! 24      4*n*d     f32 embeddings, row-major
//! ..      4*n       u32 labels, present only when K > 0
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::ViewDataset;
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const VIEW_MAGIC: &[u8; 8] = b"EMBVIEW1";
pub const VIEW_VERSION: u32 = 1;

fn format_err(offset: usize, section: &'static str, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        section,
        message: message.into(),
    }
}

pub fn write_view<W: Write>(view: &ViewDataset, mut w: W) -> Result<()> {
    let emb = view.embeddings();
    w.write_all(VIEW_MAGIC)?;
    w.write_all(&VIEW_VERSION.to_le_bytes())?;
    w.write_all(&(emb.rows() as u32).to_le_bytes())?;
    w.write_all(&(emb.cols() as u32).to_le_bytes())?;
    w.write_all(&(view.class_count() as u32).to_le_bytes())?;
    for &v in emb.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    if let Some(labels) = view.labels() {
        for &y in labels {
            w.write_all(&(y as u32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_view<R: Read>(mut r: R, name: impl Into<String>) -> Result<ViewDataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse(&bytes, name.into())
}

fn parse(bytes: &[u8], name: String) -> Result<ViewDataset> {
    let need = |offset: usize, len: usize, section: &'static str| -> Result<()> {
        if bytes.len() < offset + len {
            Err(format_err(
                bytes.len(),
                section,
                format!(
                    "truncated: {section} needs bytes {offset}..{}, file has {}",
                    offset + len,
                    bytes.len()
                ),
            ))
        } else {
            Ok(())
        }
    };
    let u32_at = |offset: usize| u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());

    need(0, 8, "magic")?;
    if &bytes[..8] != VIEW_MAGIC {
        return Err(format_err(0, "magic", "not an EMBVIEW1 file"));
    }
    need(8, 16, "header")?;
    let version = u32_at(8);
    if version != VIEW_VERSION {
        return Err(format_err(8, "header", format!("unsupported version {version}")));
    }
    let n = u32_at(12) as usize;
    let d = u32_at(16) as usize;
    let k = u32_at(20) as usize;
    if d == 0 {
        return Err(format_err(16, "header", "embedding width d must be positive"));
    }

    let emb_start = 24;
    let emb_len = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| format_err(12, "header", "n x d overflows"))?;
    need(emb_start, emb_len, "embeddings")?;
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in bytes[emb_start..emb_start + emb_len].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(
                emb_start + 4 * i,
                "embeddings",
                format!("non-finite value at row {}, col {}", i / d, i % d),
            ));
        }
        data.push(f64::from(v));
    }

    let mut end = emb_start + emb_len;
    let labels = if k > 0 {
        need(end, 4 * n, "labels")?;
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = u32_at(end + 4 * i) as usize;
            if y >= k {
                return Err(format_err(
                    end + 4 * i,
                    "labels",
                    format!("label {y} out of range for {k} classes"),
                ));
            }
            labels.push(y);
        }
        end += 4 * n;
        Some(labels)
    } else {
        None
    };
    if end != bytes.len() {
        return Err(format_err(
            end,
            "trailer",
            format!("{} unexpected trailing bytes", bytes.len() - end),
        ));
    }
    ViewDataset::new(name, Matrix::from_vec(n, d, data)?, labels, k)
}

pub fn save_view(view: &ViewDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_view(view, BufWriter::new(file))
}

/// Load a view; its name is the file stem.
pub fn load_view(path: impl AsRef<Path>) -> Result<ViewDataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = fs::read(path)?;
    parse(&bytes, name)
}
