//! Checkpoint files.
//!
//! Layout (little-endian): the 8-byte magic `MCTCKPT1`, then for every
//! parameter block in order: `u32` name length, name bytes (UTF-8), `u32`
//! value count, `f32` values. Values are narrowed to `f32` on write.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Network;
use crate::error::{Error, Result};
use crate::models::ParamSet;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MCTCKPT1";

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for block in params.blocks() {
        let values = &params.values()[block.range()];
        w.write_all(&(block.name.len() as u32).to_le_bytes())?;
        w.write_all(block.name.as_bytes())?;
        w.write_all(&(values.len() as u32).to_le_bytes())?;
        for &v in values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Format {
                offset: self.pos as u64,
                section,
                message: format!(
                    "truncated: need {len} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parse every `(name, values)` block of a checkpoint stream.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Vec<f32>)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            section: "magic",
            message: "not an MCTCKPT1 checkpoint".to_string(),
        });
    }
    let mut blocks = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32("block name length")? as usize;
        let at = cur.pos;
        let name = std::str::from_utf8(cur.take(name_len, "block name")?)
            .map_err(|_| Error::Format {
                offset: at as u64,
                section: "block name",
                message: "name is not valid UTF-8".to_string(),
            })?
            .to_string();
        let count = cur.u32("block length")? as usize;
        let raw = cur.take(count * 4, "block values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        blocks.push((name, values));
    }
    Ok(blocks)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_checkpoint(net.params(), std::io::BufWriter::new(file))
}

/// Load parameters into a network of matching architecture.
pub fn load_checkpoint(net: &mut Network, path: impl AsRef<Path>) -> Result<()> {
    let blocks = read_checkpoint(fs::File::open(path)?)?;
    let expected: Vec<_> = net.params().blocks().to_vec();
    if blocks.len() != expected.len() {
        return Err(Error::Dimension(format!(
            "checkpoint has {} blocks, model has {}",
            blocks.len(),
            expected.len()
        )));
    }
    for (spec, (name, values)) in expected.iter().zip(&blocks) {
        if &spec.name != name || spec.len() != values.len() {
            return Err(Error::Dimension(format!(
                "checkpoint block {name} ({} values) does not match model block {} ({} values)",
                values.len(),
                spec.name,
                spec.len()
            )));
        }
    }
    let params = net.params_mut();
    for (spec, (_, values)) in expected.iter().zip(blocks) {
        let dst = &mut params.values_mut()[spec.range()];
        for (d, v) in dst.iter_mut().zip(values) {
            *d = f64::from(v);
        }
    }
    Ok(())
}
