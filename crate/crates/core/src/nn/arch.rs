use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// One layer of a sequential network. Only `Conv2d` and `Linear` own
/// parameters, and neither carries a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Stride-1 convolution with symmetric zero padding.
    Conv2d {
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: usize,
    },
    Linear {
        out_features: usize,
        in_features: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            out_channels,
            in_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            padding,
        }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Linear {
            out_features,
            in_features,
        }
    }

    pub fn param_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(vec![out_channels, in_channels, kernel_h, kernel_w]),
            LayerSpec::Linear {
                out_features,
                in_features,
            } => Some(vec![out_features, in_features]),
            _ => None,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. })
    }
}

/// Shape of one sample's activation between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn len(&self) -> usize {
        match *self {
            ActShape::Image { c, h, w } => c * h * w,
            ActShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Image { c, h, w } => vec![c, h, w],
            ActShape::Flat(n) => vec![n],
        }
    }
}

/// A sequential network over `channels × height × width` inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArch {
    pub layers: Vec<LayerSpec>,
    pub input: [usize; 3],
    /// Flattened output size; the class count for classifiers.
    pub classes: usize,
}

impl ModelArch {
    /// The default two-convolution network used at desk scale:
    /// conv 5×5 → relu → maxpool 3/2 → conv 5×5 → relu → maxpool 3/2 →
    /// flatten → linear → relu → linear.
    pub fn desk(input: [usize; 3], conv_channels: [usize; 2], hidden: usize, classes: usize) -> Result<Self> {
        let [c, h, w] = input;
        let pool = |d: usize| -> Result<usize> {
            if d < 3 {
                return Err(Error::Config(format!(
                    "input {input:?} too small for two 3×3 pools"
                )));
            }
            Ok((d - 3) / 2 + 1)
        };
        let (h1, w1) = (pool(h)?, pool(w)?);
        let (h2, w2) = (pool(h1)?, pool(w1)?);
        let flat = conv_channels[1] * h2 * w2;
        let arch = ModelArch {
            layers: vec![
                LayerSpec::conv(c, conv_channels[0], 5, 2),
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 3, stride: 2 },
                LayerSpec::conv(conv_channels[0], conv_channels[1], 5, 2),
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 3, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::linear(flat, hidden),
                LayerSpec::Relu,
                LayerSpec::linear(hidden, classes),
            ],
            input,
            classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Checks shape compatibility and returns the activation shape after
    /// each layer (index 0 is the input).
    pub fn validate(&self) -> Result<Vec<ActShape>> {
        let [c, h, w] = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("empty input shape {:?}", self.input)));
        }
        let mut shapes = vec![ActShape::Image { c, h, w }];
        let mut cur = shapes[0];
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::Config(format!("layer {i} ({layer:?}): {msg}"));
            cur = match (*layer, cur) {
                (
                    LayerSpec::Conv2d {
                        out_channels,
                        in_channels,
                        kernel_h,
                        kernel_w,
                        padding,
                    },
                    ActShape::Image { c, h, w },
                ) => {
                    if out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(bad("zero extent".into()));
                    }
                    if in_channels != c {
                        return Err(bad(format!("expects {in_channels} input channels, got {c}")));
                    }
                    if h + 2 * padding < kernel_h || w + 2 * padding < kernel_w {
                        return Err(bad(format!("kernel larger than padded input {h}×{w}")));
                    }
                    ActShape::Image {
                        c: out_channels,
                        h: h + 2 * padding - kernel_h + 1,
                        w: w + 2 * padding - kernel_w + 1,
                    }
                }
                (
                    LayerSpec::Linear {
                        out_features,
                        in_features,
                    },
                    ActShape::Flat(n),
                ) => {
                    if out_features == 0 {
                        return Err(bad("zero output features".into()));
                    }
                    if in_features != n {
                        return Err(bad(format!("expects {in_features} inputs, got {n}")));
                    }
                    ActShape::Flat(out_features)
                }
                (LayerSpec::Linear { .. }, ActShape::Image { .. }) => {
                    return Err(bad("linear layer needs a flattened input".into()))
                }
                (LayerSpec::Conv2d { .. }, ActShape::Flat(_)) => {
                    return Err(bad("convolution needs an image input".into()))
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::MaxPool2d { window, stride }, ActShape::Image { c, h, w }) => {
                    if window == 0 || stride == 0 {
                        return Err(bad("zero window or stride".into()));
                    }
                    if h < window || w < window {
                        return Err(bad(format!("window larger than input {h}×{w}")));
                    }
                    ActShape::Image {
                        c,
                        h: (h - window) / stride + 1,
                        w: (w - window) / stride + 1,
                    }
                }
                (LayerSpec::MaxPool2d { .. }, ActShape::Flat(_)) => {
                    return Err(bad("pooling needs an image input".into()))
                }
                (LayerSpec::Flatten, s) => ActShape::Flat(s.len()),
            };
            shapes.push(cur);
        }
        if cur.len() != self.classes {
            return Err(Error::Config(format!(
                "network output has {} values, expected {}",
                cur.len(),
                self.classes
            )));
        }
        Ok(shapes)
    }

    /// `(layer index, parameter shape)` for every parameterized layer.
    pub fn param_shapes(&self) -> Vec<(usize, Vec<usize>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.param_shape().map(|s| (i, s)))
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }
}

/// One tensor per parameterized layer, ordered by layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layers: Vec<usize>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(entries: Vec<(usize, Tensor)>) -> Result<Self> {
        let mut layers = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (layer, t) in entries {
            if layers.last().is_some_and(|&prev| prev >= layer) {
                return Err(Error::Argument(format!(
                    "layer indices must be strictly ascending (got {layer} after {:?})",
                    layers.last()
                )));
            }
            layers.push(layer);
            tensors.push(t);
        }
        Ok(ParamSet { layers, tensors })
    }

    pub fn zeros_like(arch: &ModelArch) -> Self {
        let (layers, tensors) = arch
            .param_shapes()
            .into_iter()
            .map(|(i, s)| (i, Tensor::zeros(&s)))
            .unzip();
        ParamSet { layers, tensors }
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.layers.iter().copied().zip(&self.tensors)
    }

    pub fn get(&self, layer: usize) -> Option<&Tensor> {
        self.layers
            .iter()
            .position(|&l| l == layer)
            .map(|p| &self.tensors[p])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count over all layers.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn map(&self, f: impl Fn(&Tensor) -> Tensor) -> ParamSet {
        ParamSet {
            layers: self.layers.clone(),
            tensors: self.tensors.iter().map(f).collect(),
        }
    }

    /// Element-wise combination with another set of identical layout.
    pub fn zip_map(&self, other: &ParamSet, f: impl Fn(&Tensor, &Tensor) -> Result<Tensor>) -> Result<ParamSet> {
        self.ensure_aligned(other)?;
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| f(a, b))
            .collect::<Result<_>>()?;
        Ok(ParamSet {
            layers: self.layers.clone(),
            tensors,
        })
    }

    /// `self += alpha * other`, layer by layer.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) -> Result<()> {
        self.ensure_aligned(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn ensure_aligned(&self, other: &ParamSet) -> Result<()> {
        if self.layers != other.layers {
            return Err(Error::Shape(format!(
                "layer keys {:?} vs {:?}",
                self.layers, other.layers
            )));
        }
        for ((l, a), b) in self.iter().zip(&other.tensors) {
            a.ensure_same_shape(b, &format!("layer {l}"))?;
        }
        Ok(())
    }

    /// Checks that this set has exactly the layers and shapes of `arch`.
    pub fn ensure_matches(&self, arch: &ModelArch) -> Result<()> {
        let shapes = arch.param_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "architecture has {} parameterized layers, set has {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for ((layer, shape), (l, t)) in shapes.iter().zip(self.iter()) {
            if *layer != l || shape.as_slice() != t.shape() {
                return Err(Error::Shape(format!(
                    "layer {layer} expects {shape:?}, got layer {l} with {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Draws every parameter i.i.d. uniform on [-1, 1]. Each layer uses its own
/// stream keyed by `(seed, layer index)`.
pub fn init_params(arch: &ModelArch, seed: u64) -> Result<ParamSet> {
    arch.validate()?;
    Ok(uniform_params(arch, seed, crate::rng::Stream::Params, &[]))
}

/// Uniform [-1, 1] tensors in the parameter layout of `arch`, drawn from
/// `stream` under the given key path (layer index appended).
pub(crate) fn uniform_params(arch: &ModelArch, seed: u64, stream: Stream, path: &[u64]) -> ParamSet {
    let (layers, tensors) = arch
        .param_shapes()
        .into_iter()
        .map(|(layer, shape)| {
            let mut key = path.to_vec();
            key.push(layer as u64);
            let mut rng = stream_rng(seed, stream, &key);
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (layer, Tensor::from_parts(shape, data))
        })
        .unzip();
    ParamSet { layers, tensors }
}
