//! Score tensors, binary mask extraction and the filter-group regularizer.
//!
//! A layer's mask keeps the `max(1, round(r·n))` entries of largest
//! magnitude in the score tensor, then clears every output filter left with
//! fewer than `min_nonzero` ones. Output filters are slices along the
//! leading axis: `o,:,:,:` for convolutions and `o,:` for linear layers.

mod bitmask;

pub use bitmask::{BitMask, BitMaskSet};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor};

pub const DEFAULT_MIN_NONZERO: usize = 2;

/// One agent's trainable scores and its sparsity contract.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskState {
    pub z: ParamSet,
    retention: f64,
    pub min_nonzero: usize,
    /// Apply the filter rule to linear layers as well as convolutions.
    pub fil_linear: bool,
}

impl MaskState {
    pub fn new(z: ParamSet, retention: f64, min_nonzero: usize) -> Result<Self> {
        check_retention(retention)?;
        Ok(MaskState {
            z,
            retention,
            min_nonzero,
            fil_linear: true,
        })
    }

    pub fn retention(&self) -> f64 {
        self.retention
    }

    pub fn with_fil_linear(mut self, on: bool) -> Self {
        self.fil_linear = on;
        self
    }

    /// The extraction rule of this state applied to another tensor set
    /// (e.g. an aggregation tensor shaped like `z`).
    pub fn extract_from(&self, scores: &ParamSet) -> Result<BitMaskSet> {
        Ok(self.extract_reporting(scores)?.0)
    }

    /// Like [`MaskState::extract_from`], also returning how many bits the
    /// filter rule cleared in each layer.
    pub fn extract_reporting(&self, scores: &ParamSet) -> Result<(BitMaskSet, Vec<usize>)> {
        extract_with(scores, self.retention, self.min_nonzero, self.fil_linear)
    }
}

fn check_retention(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Argument(format!("retention ratio {r} outside (0, 1]")));
    }
    Ok(())
}

/// Number of ones a layer of `n` entries keeps at retention `r`.
pub fn retained_count(n: usize, r: f64) -> usize {
    ((r * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Keeps the `max(1, round(r·n))` entries of largest `|z|`. Equal
/// magnitudes are ranked by ascending flat index.
pub fn threshold_layer(z: &Tensor, r: f64) -> Result<BitMask> {
    check_retention(r)?;
    if z.is_empty() {
        return Err(Error::Argument("empty score tensor".into()));
    }
    let n = z.len();
    let k = retained_count(n, r);
    let mut mask = BitMask::zeros(z.shape());
    if k == n {
        return Ok(BitMask::ones(z.shape()));
    }
    let data = z.data();
    let mut order: Vec<usize> = (0..n).collect();
    let rank = |a: &usize, b: &usize| {
        data[*b]
            .abs()
            .total_cmp(&data[*a].abs())
            .then(a.cmp(b))
    };
    order.select_nth_unstable_by(k - 1, rank);
    for &i in &order[..k] {
        mask.set(i, true);
    }
    Ok(mask)
}

/// Clears every group of `group_size` contiguous entries holding fewer
/// than `min_nonzero` ones.
pub fn fil(mask: &BitMask, group_size: usize, min_nonzero: usize) -> Result<BitMask> {
    if group_size == 0 || mask.len() % group_size != 0 {
        return Err(Error::Argument(format!(
            "group size {group_size} does not partition {} entries",
            mask.len()
        )));
    }
    let mut out = mask.clone();
    if min_nonzero == 0 {
        return Ok(out);
    }
    for g in 0..mask.len() / group_size {
        let range = g * group_size..(g + 1) * group_size;
        let ones = range.clone().filter(|&i| mask.get(i)).count();
        if ones < min_nonzero {
            for i in range {
                out.set(i, false);
            }
        }
    }
    Ok(out)
}

/// [`fil`] with output-filter grouping (leading axis).
pub fn fil_by_filter(mask: &BitMask, min_nonzero: usize) -> Result<BitMask> {
    let filters = mask.shape().first().copied().unwrap_or(1);
    fil(mask, mask.len() / filters.max(1), min_nonzero)
}

/// `Fil[Thres(z_l)]` for every layer of the state.
pub fn extract_mask(state: &MaskState) -> Result<BitMaskSet> {
    state.extract_from(&state.z)
}

fn extract_with(scores: &ParamSet, r: f64, min_nonzero: usize, fil_linear: bool) -> Result<(BitMaskSet, Vec<usize>)> {
    let mut cleared = Vec::with_capacity(scores.len());
    let entries = scores
        .iter()
        .map(|(layer, t)| {
            let raw = threshold_layer(t, r)?;
            let apply = t.shape().len() == 4 || fil_linear;
            let m = if apply { fil_by_filter(&raw, min_nonzero)? } else { raw.clone() };
            cleared.push(raw.count_ones() - m.count_ones());
            Ok((layer, m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((BitMaskSet::new(entries)?, cleared))
}

fn filter_norms(t: &Tensor) -> impl Iterator<Item = (std::ops::Range<usize>, f64)> + '_ {
    let filters = t.shape()[0];
    let size = t.len() / filters;
    (0..filters).map(move |o| {
        let range = o * size..(o + 1) * size;
        let norm = t.data()[range.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
        (range, norm)
    })
}

/// `λ · Σ_layers Σ_filters ‖z_l(o, …)‖₂`.
pub fn group_lasso_value(z: &ParamSet, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let total: f64 = z
        .tensors()
        .iter()
        .flat_map(|t| filter_norms(t).map(|(_, n)| n))
        .sum();
    Ok(lambda * total)
}

/// Gradient of [`group_lasso_value`]: `λ · z_g / ‖z_g‖₂` per group, and zero
/// for groups of zero norm.
pub fn group_lasso_grad(z: &ParamSet, lambda: f64) -> Result<ParamSet> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(z.map(|t| {
        let mut g = Tensor::zeros(t.shape());
        for (range, norm) in filter_norms(t) {
            if norm > 0.0 {
                for i in range {
                    g.data_mut()[i] = lambda * t.data()[i] / norm;
                }
            }
        }
        g
    }))
}
