use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{dim_err, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Layout of one named parameter block inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered named parameter blocks backed by one flat vector.
///
/// Every mutable access bumps a version counter; together with a per-instance
/// id this lets forward traces detect that they no longer describe the
/// parameters they were computed from.
#[derive(Debug)]
pub struct ParamSet {
    blocks: Vec<BlockSpec>,
    values: Vec<f64>,
    id: u64,
    version: u64,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        Self {
            blocks: self.blocks.clone(),
            values: self.values.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.values == other.values
    }
}

impl ParamSet {
    /// Zero-initialized parameters for `(name, rows, cols)` blocks.
    pub fn zeros<S: Into<String>>(layout: impl IntoIterator<Item = (S, usize, usize)>) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (name, rows, cols) in layout {
            blocks.push(BlockSpec {
                name: name.into(),
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        }
        Self {
            blocks,
            values: vec![0.0; offset],
            id: fresh_id(),
            version: 0,
        }
    }

    /// Total parameter count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.values
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Overwrite all values from a flat vector in block order.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.values.len() {
            return Err(dim_err(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.values.len()
            )));
        }
        self.values_mut().copy_from_slice(flat);
        Ok(())
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.blocks.iter().find(|b| b.name == name)?.range();
        self.version += 1;
        Some(&mut self.values[range])
    }

    pub(crate) fn block_at(&self, index: usize) -> &[f64] {
        &self.values[self.blocks[index].range()]
    }

    /// `(instance id, version)` identifying the current parameter values.
    pub fn tag(&self) -> (u64, u64) {
        (self.id, self.version)
    }
}
