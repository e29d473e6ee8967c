//! Fixtures and independent reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use mcepl::data::{Dataset, PartitionPlan};
use mcepl::masking::{BitMask, BitMaskSet};
use mcepl::nn::{apply_mask, forward_dense, init_params, ActShape, LayerSpec, ModelArch, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn random_masks(rng: &mut ChaCha8Rng, params: &ParamSet, density: f64) -> BitMaskSet {
    BitMaskSet::new(
        params
            .iter()
            .map(|(l, t)| {
                let bits: Vec<bool> = (0..t.len()).map(|_| rng.gen_bool(density)).collect();
                (l, BitMask::from_bools(t.shape(), &bits).unwrap())
            })
            .collect(),
    )
    .unwrap()
}

/// Random masks in which every output filter keeps at least one entry, so
/// no pre-activation is identically zero (a ReLU kink for any weights).
pub fn live_filter_masks(rng: &mut ChaCha8Rng, params: &ParamSet, density: f64) -> BitMaskSet {
    BitMaskSet::new(
        params
            .iter()
            .map(|(l, t)| {
                let mut bits: Vec<bool> = (0..t.len()).map(|_| rng.gen_bool(density)).collect();
                let group = t.len() / t.shape()[0];
                for g in bits.chunks_mut(group) {
                    if !g.contains(&true) {
                        let pick = rng.gen_range(0..g.len());
                        g[pick] = true;
                    }
                }
                (l, BitMask::from_bools(t.shape(), &bits).unwrap())
            })
            .collect(),
    )
    .unwrap()
}

/// A small random conv net with 1–2 conv layers, optional pooling and two
/// linear layers, plus a batch and labels.
pub struct SmallNet {
    pub arch: ModelArch,
    pub w: ParamSet,
    pub m: BitMaskSet,
    pub batch: Tensor,
    pub labels: Vec<usize>,
}

pub fn small_net(seed: u64) -> SmallNet {
    let mut r = rng(seed);
    let c = r.gen_range(1..=2);
    let h0 = r.gen_range(4..=6);
    let mut h = h0;
    let mut ch = c;
    let mut layers = Vec::new();
    for i in 0..r.gen_range(1..=2) {
        let out = r.gen_range(1..=3);
        let k = r.gen_range(1..=3).min(h);
        let pad = if i == 0 && k >= 2 { r.gen_range(0..=1) } else { 0 };
        layers.push(LayerSpec::conv(ch, out, k, pad));
        layers.push(LayerSpec::Relu);
        h = h + 2 * pad - k + 1;
        ch = out;
        if h >= 3 && r.gen_bool(0.5) {
            layers.push(LayerSpec::MaxPool2d { window: 2, stride: 1 });
            h -= 1;
        }
    }
    layers.push(LayerSpec::Flatten);
    let hidden = r.gen_range(3..=6);
    let classes = r.gen_range(2..=4);
    layers.push(LayerSpec::linear(ch * h * h, hidden));
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::linear(hidden, classes));
    let input = [c, h0, h0];
    let arch = ModelArch { layers, input, classes };
    arch.validate().unwrap();
    // Redraw until every ReLU input and pooling window sits clear of its kink,
    // so finite differences see a smooth function.
    for attempt in 0u64.. {
        // Scaled weights keep logits moderate so the loss is not saturated.
        let w = init_params(&arch, seed + (attempt << 32)).unwrap().map(|t| t.map(|v| v * 0.5));
        let m = live_filter_masks(&mut r, &w, 0.6);
        let b = r.gen_range(2..=4);
        let batch = uniform_tensor(&mut r, &[b, input[0], input[1], input[2]], 0.0, 1.0);
        let labels = (0..b).map(|_| r.gen_range(0..classes)).collect();
        let v = apply_mask(&w, &m).unwrap();
        if kink_margin(&arch, &v, &batch) > 1e-4 {
            return SmallNet { arch, w, m, batch, labels };
        }
    }
    unreachable!()
}

/// Smallest distance of any ReLU input from zero, or of any pooling
/// window's positive winner from its runner-up, over the batch. Inputs
/// and activations are assumed nonnegative.
pub fn kink_margin(arch: &ModelArch, v: &ParamSet, batch: &Tensor) -> f64 {
    let shapes = arch.validate().unwrap();
    let mut margin = f64::INFINITY;
    for (i, layer) in arch.layers.iter().enumerate() {
        if !matches!(layer, LayerSpec::Relu | LayerSpec::MaxPool2d { .. }) {
            continue;
        }
        let prefix = ModelArch {
            layers: arch.layers[..i].to_vec(),
            input: arch.input,
            classes: shapes[i].len(),
        };
        let params = ParamSet::new(v.iter().filter(|(l, _)| *l < i).map(|(l, t)| (l, t.clone())).collect()).unwrap();
        let (act, _) = forward_dense(&prefix, &params, batch).unwrap();
        match (layer, shapes[i]) {
            (LayerSpec::Relu, _) => {
                // Summing the whole receptive field finds units whose inputs are
                // all zero; those stay at zero under any small perturbation.
                let ones = ParamSet::new(
                    params
                        .iter()
                        .map(|(l, t)| (l, if l + 1 == i { Tensor::full(t.shape(), 1.0) } else { t.clone() }))
                        .collect(),
                )
                .unwrap();
                let (reach, _) = forward_dense(&prefix, &ones, batch).unwrap();
                for (x, r) in act.data().iter().zip(reach.data()) {
                    if *r != 0.0 {
                        margin = margin.min(x.abs());
                    }
                }
            }
            (LayerSpec::MaxPool2d { window, stride }, ActShape::Image { c, h, w }) => {
                let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
                for s in act.data().chunks(c * h * w) {
                    for ch in 0..c {
                        for (y, x) in (0..oh).flat_map(|y| (0..ow).map(move |x| (y, x))) {
                            let mut vals: Vec<f64> = (0..window * window)
                                .map(|k| s[ch * h * w + (y * stride + k / window) * w + x * stride + k % window])
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            // A window of rectified zeros stays zero under small perturbations.
                            if vals[0] > 0.0 {
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    margin
}

/// Two agents joined by one edge, each with three samples of a
/// three-class problem, evaluated by a single biasless conv layer
/// `[3, 2, 2, 2]` over `[2, 2, 2]` inputs.
pub struct OracleFixture {
    pub arch: ModelArch,
    pub train: Dataset,
    pub plan: PartitionPlan,
}

pub fn oracle_fixture(seed: u64) -> OracleFixture {
    let mut r = rng(seed);
    let arch = ModelArch {
        layers: vec![LayerSpec::conv(2, 3, 2, 0), LayerSpec::Flatten],
        input: [2, 2, 2],
        classes: 3,
    };
    let features = uniform_tensor(&mut r, &[6, 2, 2, 2], 0.0, 1.0);
    let train = Dataset::new(features, vec![0, 1, 2, 2, 0, 1], 3).unwrap();
    let plan = PartitionPlan {
        labels: vec![vec![0, 1, 2], vec![0, 1, 2]],
        train: vec![vec![0, 1, 2], vec![3, 4, 5]],
        test: vec![vec![0, 1, 2], vec![3, 4, 5]],
    };
    OracleFixture { arch, train, plan }
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Keeps the `max(1, round(r n))` largest |y|, lower index first on ties,
/// then clears filters (rows of `group` entries) with fewer than
/// `min_nonzero` survivors.
pub fn oracle_extract(y: &[f64], r: f64, group: usize, min_nonzero: usize) -> Vec<bool> {
    let n = y.len();
    let k = ((r * n as f64).round() as usize).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].abs().partial_cmp(&y[a].abs()).unwrap().then(a.cmp(&b)));
    let mut m = vec![false; n];
    for &i in &order[..k] {
        m[i] = true;
    }
    for g in m.chunks_mut(group) {
        if g.iter().filter(|b| **b).count() < min_nonzero {
            g.iter_mut().for_each(|b| *b = false);
        }
    }
    m
}

/// `y = z + mean|z| · sign(z) · avg`.
pub fn oracle_aggregate(z: &[f64], avg: &[f64]) -> Vec<f64> {
    let amp = z.iter().map(|v| v.abs()).sum::<f64>() / z.len() as f64;
    z.iter().zip(avg).map(|(zi, ai)| zi + amp * sgn(*zi) * ai).collect()
}

/// Per-agent state after one scripted round.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    pub z: Vec<f64>,
    pub mask: Vec<bool>,
    /// Intermediate mask received from the other agent.
    pub received: Vec<bool>,
}

/// One collaborative round on the two-agent fixture, written out entry by
/// entry. `z0` are the initial scores, `w` the shared weights (both
/// `[3, 2, 2, 2]` flattened), `shards` each agent's training samples.
#[allow(clippy::too_many_arguments)]
pub fn oracle_round(
    w: &[f64],
    z0: [&[f64]; 2],
    x: &[Vec<f64>],
    labels: &[usize],
    shards: [&[usize]; 2],
    r: [f64; 2],
    lr: f64,
    lambda: f64,
    min_nonzero: usize,
) -> [OracleAgent; 2] {
    const O: usize = 3;
    const K: usize = 8;
    let m0: Vec<Vec<bool>> = (0..2).map(|i| oracle_extract(z0[i], r[i], K, min_nonzero)).collect();
    let mut zh = vec![Vec::new(), Vec::new()];
    let mut gs = vec![Vec::new(), Vec::new()];
    let mut mh = vec![Vec::new(), Vec::new()];
    for i in 0..2 {
        let z = z0[i];
        let v: Vec<f64> = (0..O * K).map(|e| if m0[i][e] { w[e] } else { 0.0 }).collect();
        let b = shards[i].len() as f64;
        let mut gv = vec![0.0; O * K];
        for &s in shards[i] {
            let logits: Vec<f64> = (0..O).map(|o| (0..K).map(|e| v[o * K + e] * x[s][e]).sum()).collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = ex.iter().sum();
            for o in 0..O {
                let d = ex[o] / total - if labels[s] == o { 1.0 } else { 0.0 };
                for e in 0..K {
                    gv[o * K + e] += d * x[s][e] / b;
                }
            }
        }
        let mut g = vec![0.0; O * K];
        for o in 0..O {
            let norm = (0..K).map(|e| z[o * K + e].powi(2)).sum::<f64>().sqrt();
            for e in 0..K {
                let idx = o * K + e;
                let lasso = if norm > 0.0 { lambda * z[idx] / norm } else { 0.0 };
                g[idx] = gv[idx] * w[idx] * sgn(z[idx]) + lasso;
            }
        }
        let half: Vec<f64> = (0..O * K).map(|e| z[e] - lr * g[e]).collect();
        let avg: Vec<f64> = m0[1 - i].iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let y = oracle_aggregate(&half, &avg);
        mh[i] = oracle_extract(&y, r[i], K, min_nonzero);
        zh[i] = half;
        gs[i] = g;
    }
    let agent = |i: usize| {
        let recv = &mh[1 - i];
        let avg: Vec<f64> = recv.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let z: Vec<f64> = (0..O * K).map(|e| zh[i][e] - lr * gs[i][e] * avg[e]).collect();
        let y = oracle_aggregate(&z, &avg);
        OracleAgent {
            mask: oracle_extract(&y, r[i], K, min_nonzero),
            z,
            received: recv.clone(),
        }
    };
    [agent(0), agent(1)]
}
