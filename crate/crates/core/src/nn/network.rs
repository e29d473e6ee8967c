use super::{ActShape, LayerSpec, ModelArch, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::masking::BitMaskSet;

/// Intermediates retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    shapes: Vec<ActShape>,
    layers: Vec<Cached>,
}

#[derive(Debug, Clone)]
enum Cached {
    /// im2col matrices, one `K × P` block per sample.
    Conv { cols: Vec<f64> },
    Linear { input: Vec<f64> },
    Relu { active: Vec<bool> },
    /// Flat input offset (within the sample) of each pooled output's winner.
    Pool { argmax: Vec<usize> },
    Flatten,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

/// `w ⊙ m` per layer. A set bit copies the weight unchanged, so an all-ones
/// mask reproduces `w` bit for bit.
pub fn apply_mask(w: &ParamSet, m: &BitMaskSet) -> Result<ParamSet> {
    if w.layers() != m.layers() {
        return Err(Error::Shape(format!(
            "mask layers {:?} vs parameter layers {:?}",
            m.layers(),
            w.layers()
        )));
    }
    let tensors = w
        .tensors()
        .iter()
        .zip(m.masks())
        .zip(w.layers())
        .map(|((t, mask), layer)| {
            if mask.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "layer {layer}: mask {:?} vs parameter {:?}",
                    mask.shape(),
                    t.shape()
                )));
            }
            let data = t
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| if mask.get(i) { v } else { 0.0 })
                .collect();
            Ok((*layer, Tensor::from_parts(t.shape().to_vec(), data)))
        })
        .collect::<Result<Vec<_>>>()?;
    ParamSet::new(tensors)
}

/// Forward pass with effective parameters `v = w ⊙ m`.
pub fn forward(arch: &ModelArch, w: &ParamSet, m: &BitMaskSet, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let v = apply_mask(w, m)?;
    forward_dense(arch, &v, batch)
}

/// Forward pass with the parameters used as given. Returns `[batch, classes]` logits.
pub fn forward_dense(arch: &ModelArch, params: &ParamSet, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let shapes = arch.validate()?;
    params.ensure_matches(arch)?;
    let [c, h, w] = arch.input;
    let bs = batch.shape();
    if bs.len() != 4 || bs[1..] != [c, h, w] {
        return Err(Error::Shape(format!(
            "batch {bs:?} does not match input [B, {c}, {h}, {w}]"
        )));
    }
    let n = bs[0];
    let mut x = batch.data().to_vec();
    let mut cache = Vec::with_capacity(arch.layers.len());
    let mut pi = 0;
    for (li, layer) in arch.layers.iter().enumerate() {
        let (inp, out) = (shapes[li], shapes[li + 1]);
        let (y, entry) = match *layer {
            LayerSpec::Conv2d { kernel_h, kernel_w, padding, .. } => {
                let wt = params.tensors()[pi].data();
                pi += 1;
                conv_forward(&x, n, inp, out, wt, kernel_h, kernel_w, padding)
            }
            LayerSpec::Linear { out_features, in_features } => {
                let wt = params.tensors()[pi].data();
                pi += 1;
                let mut y = vec![0.0; n * out_features];
                for b in 0..n {
                    let xb = &x[b * in_features..(b + 1) * in_features];
                    for (o, yo) in y[b * out_features..(b + 1) * out_features].iter_mut().enumerate() {
                        *yo = dot(&wt[o * in_features..(o + 1) * in_features], xb);
                    }
                }
                (y, Cached::Linear { input: x })
            }
            LayerSpec::Relu => {
                let active: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
                let y = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                (y, Cached::Relu { active })
            }
            LayerSpec::MaxPool2d { window, stride } => pool_forward(&x, n, inp, out, window, stride),
            LayerSpec::Flatten => (x, Cached::Flatten),
        };
        x = y;
        cache.push(entry);
    }
    let logits = Tensor::from_parts(vec![n, arch.classes], x);
    Ok((
        logits,
        ForwardCache {
            batch: n,
            shapes,
            layers: cache,
        },
    ))
}

/// Gradient of a scalar with respect to every parameter, given the
/// gradient with respect to the logits.
fn backward(arch: &ModelArch, params: &ParamSet, cache: &ForwardCache, dlogits: &[f64]) -> ParamSet {
    let n = cache.batch;
    let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let first_param = arch.layers.iter().position(|l| l.param_shape().is_some());
    let mut pi = params.len();
    let mut dy = dlogits.to_vec();
    for li in (0..arch.layers.len()).rev() {
        let (inp, out) = (cache.shapes[li], cache.shapes[li + 1]);
        // nothing upstream of the first parameterized layer needs a gradient
        let need_dx = first_param.is_some_and(|f| li > f);
        dy = match (&arch.layers[li], &cache.layers[li]) {
            (LayerSpec::Conv2d { kernel_h, kernel_w, padding, .. }, Cached::Conv { cols }) => {
                pi -= 1;
                let wt = params.tensors()[pi].data();
                conv_backward(
                    &dy,
                    n,
                    inp,
                    out,
                    wt,
                    cols,
                    (*kernel_h, *kernel_w, *padding),
                    grads[pi].data_mut(),
                    need_dx,
                )
            }
            (LayerSpec::Linear { out_features, in_features }, Cached::Linear { input }) => {
                pi -= 1;
                let wt = params.tensors()[pi].data();
                let gw = grads[pi].data_mut();
                let (of, inf) = (*out_features, *in_features);
                let mut dx = if need_dx { vec![0.0; n * inf] } else { Vec::new() };
                for b in 0..n {
                    let xb = &input[b * inf..(b + 1) * inf];
                    for o in 0..of {
                        let g = dy[b * of + o];
                        if g == 0.0 {
                            continue;
                        }
                        axpy(g, xb, &mut gw[o * inf..(o + 1) * inf]);
                        if need_dx {
                            axpy(g, &wt[o * inf..(o + 1) * inf], &mut dx[b * inf..(b + 1) * inf]);
                        }
                    }
                }
                dx
            }
            (LayerSpec::Relu, Cached::Relu { active }) => {
                if !need_dx {
                    Vec::new()
                } else {
                    dy.iter().zip(active).map(|(&g, &a)| if a { g } else { 0.0 }).collect()
                }
            }
            (LayerSpec::MaxPool2d { .. }, Cached::Pool { argmax }) => {
                if !need_dx {
                    Vec::new()
                } else {
                    let (il, ol) = (inp.len(), out.len());
                    let mut dx = vec![0.0; n * il];
                    for b in 0..n {
                        for j in 0..ol {
                            dx[b * il + argmax[b * ol + j]] += dy[b * ol + j];
                        }
                    }
                    dx
                }
            }
            (LayerSpec::Flatten, Cached::Flatten) => dy,
            _ => unreachable!("cache entry does not match layer {li}"),
        };
        if !need_dx && pi == 0 {
            break;
        }
    }
    ParamSet::new(params.layers().iter().copied().zip(grads).collect()).expect("layers taken from a valid set")
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::Shape(format!(
            "logits {s:?} vs {} labels",
            labels.len()
        )));
    }
    let (n, c) = (s[0], s[1]);
    if n == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * c];
    let inv_n = 1.0 / n as f64;
    for (b, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Argument(format!("label {y} outside [0, {c})")));
        }
        let row = &logits.data()[b * c..(b + 1) * c];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        let g = &mut grad[b * c..(b + 1) * c];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - lse).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    Ok((loss * inv_n, Tensor::from_parts(vec![n, c], grad)))
}

/// Loss and gradient with respect to the parameters as given.
pub fn loss_and_grad(arch: &ModelArch, params: &ParamSet, batch: &Tensor, labels: &[usize]) -> Result<(f64, ParamSet)> {
    if labels.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if batch.shape().first() != Some(&labels.len()) {
        return Err(Error::Shape(format!(
            "batch {:?} vs {} labels",
            batch.shape(),
            labels.len()
        )));
    }
    let (logits, cache) = forward_dense(arch, params, batch)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    Ok((loss, backward(arch, params, &cache, dlogits.data())))
}

/// Loss of the masked network and its gradient with respect to the
/// effective parameters `v = w ⊙ m` (not `w`).
pub fn loss_and_grad_v(
    arch: &ModelArch,
    w: &ParamSet,
    m: &BitMaskSet,
    batch: &Tensor,
    labels: &[usize],
) -> Result<(f64, ParamSet)> {
    let v = apply_mask(w, m)?;
    loss_and_grad(arch, &v, batch, labels)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Straight-through score gradient `grad_v ⊙ w ⊙ sign(z)`, with `sign(0) = 0`.
pub fn grad_z(grad_v: &Tensor, w: &Tensor, z: &Tensor) -> Result<Tensor> {
    grad_v.ensure_same_shape(w, "grad_z grad_v/w")?;
    grad_v.ensure_same_shape(z, "grad_z grad_v/z")?;
    let data = grad_v
        .data()
        .iter()
        .zip(w.data())
        .zip(z.data())
        .map(|((&g, &wv), &zv)| g * wv * sign(zv))
        .collect();
    Ok(Tensor::from_parts(grad_v.shape().to_vec(), data))
}

/// [`grad_z`] applied layer by layer.
pub fn grad_z_set(grad_v: &ParamSet, w: &ParamSet, z: &ParamSet) -> Result<ParamSet> {
    w.ensure_aligned(z)?;
    let gw = grad_v.zip_map(w, |g, wt| Ok(Tensor::from_parts(g.shape().to_vec(), g.data().iter().zip(wt.data()).map(|(a, b)| a * b).collect())))?;
    gw.zip_map(z, |g, zt| {
        Ok(Tensor::from_parts(
            g.shape().to_vec(),
            g.data().iter().zip(zt.data()).map(|(&a, &b)| a * sign(b)).collect(),
        ))
    })
}

/// Arg-max class per sample; ties go to the lower class index.
pub fn predict(arch: &ModelArch, params: &ParamSet, batch: &Tensor) -> Result<Vec<usize>> {
    let (logits, _) = forward_dense(arch, params, batch)?;
    let c = arch.classes;
    Ok(logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Fraction of correctly classified samples among `indices` of `features`.
/// An empty index list scores 0.
pub fn accuracy(arch: &ModelArch, params: &ParamSet, features: &Tensor, labels: &[usize], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in indices.chunks(256) {
        let batch = features.gather(chunk);
        let pred = predict(arch, params, &batch)?;
        correct += pred.iter().zip(chunk).filter(|(p, &i)| **p == labels[i]).count();
    }
    Ok(correct as f64 / indices.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn image(s: ActShape) -> (usize, usize, usize) {
    match s {
        ActShape::Image { c, h, w } => (c, h, w),
        ActShape::Flat(_) => unreachable!("validated as image"),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    n: usize,
    inp: ActShape,
    out: ActShape,
    wt: &[f64],
    kh: usize,
    kw: usize,
    pad: usize,
) -> (Vec<f64>, Cached) {
    let (ci, h, w) = image(inp);
    let (co, ho, wo) = image(out);
    let k = ci * kh * kw;
    let p = ho * wo;
    let mut cols = vec![0.0; n * k * p];
    let mut y = vec![0.0; n * co * p];
    for b in 0..n {
        let xb = &x[b * ci * h * w..(b + 1) * ci * h * w];
        let cb = &mut cols[b * k * p..(b + 1) * k * p];
        for c in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = ((c * kh + ky) * kw + kx) * p;
                    for oy in 0..ho {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for ox in 0..wo {
                            let ix = ox + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            cb[row + oy * wo + ox] = xb[(c * h + iy) * w + ix - pad];
                        }
                    }
                }
            }
        }
        let yb = &mut y[b * co * p..(b + 1) * co * p];
        for o in 0..co {
            let yo = &mut yb[o * p..(o + 1) * p];
            for kk in 0..k {
                let wv = wt[o * k + kk];
                if wv != 0.0 {
                    axpy(wv, &cb[kk * p..(kk + 1) * p], yo);
                }
            }
        }
    }
    (y, Cached::Conv { cols })
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    dy: &[f64],
    n: usize,
    inp: ActShape,
    out: ActShape,
    wt: &[f64],
    cols: &[f64],
    (kh, kw, pad): (usize, usize, usize),
    gw: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let (ci, h, w) = image(inp);
    let (co, ho, wo) = image(out);
    let k = ci * kh * kw;
    let p = ho * wo;
    let mut dx = if need_dx { vec![0.0; n * ci * h * w] } else { Vec::new() };
    let mut dcols = vec![0.0; if need_dx { k * p } else { 0 }];
    for b in 0..n {
        let cb = &cols[b * k * p..(b + 1) * k * p];
        let db = &dy[b * co * p..(b + 1) * co * p];
        for o in 0..co {
            let dyo = &db[o * p..(o + 1) * p];
            for kk in 0..k {
                gw[o * k + kk] += dot(dyo, &cb[kk * p..(kk + 1) * p]);
            }
        }
        if !need_dx {
            continue;
        }
        dcols.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..co {
            let dyo = &db[o * p..(o + 1) * p];
            for kk in 0..k {
                let wv = wt[o * k + kk];
                if wv != 0.0 {
                    axpy(wv, dyo, &mut dcols[kk * p..(kk + 1) * p]);
                }
            }
        }
        let dxb = &mut dx[b * ci * h * w..(b + 1) * ci * h * w];
        for c in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = ((c * kh + ky) * kw + kx) * p;
                    for oy in 0..ho {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for ox in 0..wo {
                            let ix = ox + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            dxb[(c * h + iy) * w + ix - pad] += dcols[row + oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

fn pool_forward(x: &[f64], n: usize, inp: ActShape, out: ActShape, window: usize, stride: usize) -> (Vec<f64>, Cached) {
    let (c, h, w) = image(inp);
    let (_, ho, wo) = image(out);
    let (il, ol) = (c * h * w, c * ho * wo);
    let mut y = vec![0.0; n * ol];
    let mut argmax = vec![0usize; n * ol];
    for b in 0..n {
        let xb = &x[b * il..(b + 1) * il];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    // row-major scan with strict comparison: ties keep the lowest flat index
                    let mut best = (ch * h + oy * stride) * w + ox * stride;
                    for ky in 0..window {
                        for kx in 0..window {
                            let idx = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                            if xb[idx] > xb[best] {
                                best = idx;
                            }
                        }
                    }
                    let j = (ch * ho + oy) * wo + ox;
                    y[b * ol + j] = xb[best];
                    argmax[b * ol + j] = best;
                }
            }
        }
    }
    (y, Cached::Pool { argmax })
}
