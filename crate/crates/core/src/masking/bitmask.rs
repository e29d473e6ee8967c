use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor};

/// Binary tensor stored one bit per entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    shape: Vec<usize>,
    len: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        BitMask {
            shape: shape.to_vec(),
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let mut m = Self::zeros(shape);
        for i in 0..m.len {
            m.set(i, true);
        }
        m
    }

    pub fn from_bools(shape: &[usize], bits: &[bool]) -> Result<Self> {
        let mut m = Self::zeros(shape);
        if bits.len() != m.len {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {} bits, got {}",
                m.len,
                bits.len()
            )));
        }
        for (i, &b) in bits.iter().enumerate() {
            m.set(i, b);
        }
        Ok(m)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.len);
        let w = &mut self.words[i / 64];
        if bit {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// 0.0 / 1.0 tensor of the same shape.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            self.shape.clone(),
            self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// One mask per parameterized layer, keyed like the matching [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitMaskSet {
    layers: Vec<usize>,
    masks: Vec<BitMask>,
}

impl BitMaskSet {
    pub fn new(entries: Vec<(usize, BitMask)>) -> Result<Self> {
        let mut set = BitMaskSet::default();
        for (layer, mask) in entries {
            if set.layers.last().is_some_and(|&p| p >= layer) {
                return Err(Error::Argument(format!(
                    "mask layer indices must be strictly ascending (got {layer})"
                )));
            }
            set.layers.push(layer);
            set.masks.push(mask);
        }
        Ok(set)
    }

    pub fn ones_like(params: &ParamSet) -> Self {
        BitMaskSet {
            layers: params.layers().to_vec(),
            masks: params.tensors().iter().map(|t| BitMask::ones(t.shape())).collect(),
        }
    }

    pub fn zeros_like(params: &ParamSet) -> Self {
        BitMaskSet {
            layers: params.layers().to_vec(),
            masks: params.tensors().iter().map(|t| BitMask::zeros(t.shape())).collect(),
        }
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn masks(&self) -> &[BitMask] {
        &self.masks
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BitMask)> {
        self.layers.iter().copied().zip(&self.masks)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Entries over all layers.
    pub fn total_len(&self) -> usize {
        self.masks.iter().map(BitMask::len).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.masks.iter().map(BitMask::count_ones).sum()
    }

    /// Checks that layer keys and shapes match `params`.
    pub fn ensure_matches(&self, params: &ParamSet) -> Result<()> {
        if self.layers != params.layers() {
            return Err(Error::Shape(format!(
                "mask layers {:?} vs parameter layers {:?}",
                self.layers,
                params.layers()
            )));
        }
        for ((l, m), t) in self.iter().zip(params.tensors()) {
            if m.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "layer {l}: mask {:?} vs tensor {:?}",
                    m.shape(),
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}
