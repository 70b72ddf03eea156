use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Named, contiguous slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Flat learnable parameters plus the name table addressing them.
///
/// Blocks are disjoint and tile `0..len()` in order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    values: Vec<T>,
    blocks: Vec<ParamBlock>,
}

impl<T: Scalar> ParamStore<T> {
    pub(crate) fn zeros(blocks: Vec<ParamBlock>) -> Self {
        let len = blocks.last().map_or(0, |b| b.start + b.len);
        ParamStore {
            values: vec![T::zero(); len],
            blocks,
        }
    }

    /// Rebuilds a store from a saved name table and vector.
    pub fn from_parts(blocks: Vec<ParamBlock>, values: Vec<T>) -> Option<Self> {
        let mut next = 0;
        for b in &blocks {
            if b.start != next {
                return None;
            }
            next += b.len;
        }
        (next == values.len()).then_some(ParamStore { values, blocks })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.block(name).map(|b| &self.values[b.range()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.block(name)?.range();
        Some(&mut self.values[r])
    }

    /// Blocks whose name starts with `prefix`, e.g. `"stage2."`.
    pub fn blocks_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = &'a ParamBlock> + 'a {
        self.blocks
            .iter()
            .filter(move |b| b.name.starts_with(prefix))
    }
}

/// Appends named blocks and hands back their offsets.
#[derive(Debug, Default)]
pub(crate) struct LayoutBuilder {
    blocks: Vec<ParamBlock>,
    next: usize,
}

impl LayoutBuilder {
    pub fn block(&mut self, name: impl Into<String>, len: usize) -> usize {
        let start = self.next;
        self.blocks.push(ParamBlock {
            name: name.into(),
            start,
            len,
        });
        self.next += len;
        start
    }

    pub fn len(&self) -> usize {
        self.next
    }

    pub fn finish(self) -> Vec<ParamBlock> {
        self.blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_tile_the_vector() {
        let mut b = LayoutBuilder::default();
        assert_eq!(b.block("a", 3), 0);
        assert_eq!(b.block("b", 0), 3);
        assert_eq!(b.block("c", 2), 3);
        let store: ParamStore<f64> = ParamStore::zeros(b.finish());
        assert_eq!(store.len(), 5);
        assert_eq!(store.get("c").unwrap().len(), 2);
        assert!(store.get("missing").is_none());
    }

    #[test]
    fn from_parts_rejects_gaps() {
        let blocks = vec![
            ParamBlock {
                name: "a".into(),
                start: 0,
                len: 2,
            },
            ParamBlock {
                name: "b".into(),
                start: 3,
                len: 1,
            },
        ];
        assert!(ParamStore::from_parts(blocks, vec![0.0f64; 4]).is_none());
    }
}
